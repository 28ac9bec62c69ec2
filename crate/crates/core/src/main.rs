fn main() {
    std::process::exit(bifurkit::cli::run(std::env::args_os()));
}
