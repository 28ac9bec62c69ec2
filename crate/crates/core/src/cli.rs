//! The `bifurkit` command line: config loading, command dispatch, report files.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::checks;
use crate::continuation::{self, Branch, ContinuationConfig, Diagram, MonitorReport};
use crate::linalg::vec_norm_inf;
use crate::lsred::{self, LocalOptions};
use crate::matcurve::{self, CurveOptions, SpectrumReport};
use crate::problems::{Problem, ProblemSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OUTPUT: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "bifurkit", version, about = "Local bifurcation invariants and branch continuation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generalized spectrum of the trivial-branch linearization.
    Spectrum(Common),
    /// Local analysis at a singular point.
    Local(Common),
    /// Branch continuation from a singular point or an explicit state.
    Continue(Common),
    /// Randomized invariant suites.
    Check(Common),
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Config(String),
    Numerical(String),
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Output(_) => EXIT_OUTPUT,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Output(m) => write!(f, "output error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

type CliResult<T> = std::result::Result<T, CliError>;

fn numerical(e: crate::Error) -> CliError {
    CliError::Numerical(e.to_string())
}

fn output<E: std::fmt::Display>(path: &Path) -> impl Fn(E) -> CliError + '_ {
    move |e| CliError::Output(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub spectrum: Option<SpectrumParams>,
    #[serde(default)]
    pub local: Option<LocalParams>,
    #[serde(default, rename = "continue")]
    pub continuation: Option<ContinueParams>,
    #[serde(default)]
    pub check: Option<CheckParams>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumParams {
    pub interval: (f64, f64),
    #[serde(default)]
    pub options: CurveOptions,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalParams {
    pub lambda0: f64,
    /// State inline, or as a whitespace/comma separated file; zero when both are absent.
    #[serde(default)]
    pub u: Option<Vec<f64>>,
    #[serde(default)]
    pub u_file: Option<PathBuf>,
    #[serde(default)]
    pub options: LocalOptions,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingularSeed {
    pub lambda0: f64,
    /// State inline, or as a whitespace/comma separated file; zero when both are absent.
    #[serde(default)]
    pub u: Option<Vec<f64>>,
    #[serde(default)]
    pub u_file: Option<PathBuf>,
    /// Local branch indices to trace; all departures when absent.
    #[serde(default)]
    pub branches: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartSeed {
    pub lambda: f64,
    /// State inline, or as a whitespace/comma separated file; zero when both are absent.
    #[serde(default)]
    pub u: Option<Vec<f64>>,
    #[serde(default)]
    pub u_file: Option<PathBuf>,
    /// Sign applied to the initial tangent.
    #[serde(default = "plus_one")]
    pub direction: f64,
}

fn plus_one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinueParams {
    #[serde(default)]
    pub singular: Option<SingularSeed>,
    #[serde(default)]
    pub start: Option<StartSeed>,
    #[serde(default)]
    pub config: ContinuationConfig,
    /// Interval for the trivial spectrum behind the parity ledger;
    /// defaults to the λ bounds for problems with a trivial branch.
    #[serde(default)]
    pub ledger_interval: Option<(f64, f64)>,
    #[serde(default)]
    pub snapshot_every: Option<usize>,
    #[serde(default = "yes")]
    pub monitor: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckParams {
    #[serde(default = "default_cases")]
    pub cases: usize,
    #[serde(default)]
    pub suites: Option<Vec<String>>,
    /// Stored diagram whose branches are run through the problem's monitors.
    #[serde(default)]
    pub diagram: Option<PathBuf>,
}

fn default_cases() -> usize {
    checks::DEFAULT_CASES
}

impl Default for CheckParams {
    fn default() -> Self {
        CheckParams { cases: checks::DEFAULT_CASES, suites: None, diagram: None }
    }
}

/// A parsed config together with its source text (for line lookups) and directory.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    pub text: String,
    pub dir: PathBuf,
}

impl Loaded {
    /// Config error pointing at the first line mentioning `"key"`.
    fn err_at(&self, key: &str, msg: impl std::fmt::Display) -> CliError {
        let needle = format!("\"{key}\"");
        match self.text.lines().position(|l| l.contains(&needle)) {
            Some(i) => CliError::Config(format!("line {}: {key}: {msg}", i + 1)),
            None => CliError::Config(format!("{key}: {msg}")),
        }
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.dir.join(p)
        }
    }
}

fn json_err(e: serde_json::Error) -> CliError {
    let msg = e.to_string();
    let suffix = format!(" at line {} column {}", e.line(), e.column());
    let msg = msg.strip_suffix(&suffix).unwrap_or(&msg);
    CliError::Config(format!("line {}, column {}: {msg}", e.line(), e.column()))
}

pub fn parse_config(text: &str) -> CliResult<RunConfig> {
    // version first, so a future schema is reported as such rather than as a field mismatch
    let raw: serde_json::Value = serde_json::from_str(text).map_err(json_err)?;
    match raw.get("schema").and_then(|v| v.as_u64()) {
        Some(1) => {}
        Some(v) => {
            let line = text.lines().position(|l| l.contains("\"schema\"")).map(|i| i + 1).unwrap_or(1);
            return Err(CliError::Config(format!("line {line}: unsupported schema version {v} (expected 1)")));
        }
        None => return Err(CliError::Config("line 1: missing top-level \"schema\": 1".into())),
    }
    serde_json::from_str(text).map_err(json_err)
}

pub fn load_config(path: &Path) -> CliResult<Loaded> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let config = parse_config(&text)?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Loaded { config, text, dir })
}

fn build_problem(ld: &Loaded) -> CliResult<Problem> {
    ld.config.problem.build().map_err(|e| ld.err_at("problem", e))
}

fn read_state(ld: &Loaded, u: &Option<Vec<f64>>, u_file: &Option<PathBuf>, problem: &Problem, key: &str) -> CliResult<DVector<f64>> {
    let n = problem.n();
    let values = match (u, u_file) {
        (Some(_), Some(_)) => return Err(ld.err_at(key, "give either u or u_file, not both")),
        (Some(u), None) => u.clone(),
        (None, Some(f)) => {
            let path = ld.resolve(f);
            let text = fs::read_to_string(&path).map_err(|e| ld.err_at("u_file", format!("{}: {e}", path.display())))?;
            let mut v = Vec::new();
            for tok in text.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
                v.push(tok.parse::<f64>().map_err(|e| ld.err_at("u_file", format!("{tok:?}: {e}")))?);
            }
            v
        }
        (None, None) => return Ok(problem.zero_state()),
    };
    if values.len() != n {
        return Err(ld.err_at(key, format!("state has {} entries, problem has {n} unknowns", values.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(ld.err_at(key, "state has non-finite entries"));
    }
    Ok(DVector::from_vec(values))
}

fn check_curve_options(ld: &Loaded, o: &CurveOptions) -> CliResult<()> {
    for (k, v) in [
        ("heldout_tol", o.heldout_tol),
        ("zero_rel", o.zero_rel),
        ("cluster", o.cluster),
        ("window", o.window),
        ("isolation", o.isolation),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(ld.err_at(k, format!("must be positive, got {v}")));
        }
    }
    Ok(())
}

fn check_local_options(ld: &Loaded, o: &LocalOptions) -> CliResult<()> {
    check_curve_options(ld, &o.curve)?;
    let b = &o.probe_box;
    for (k, v) in [("lambda_half", b.lambda_half), ("z_half", b.z_half)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(ld.err_at(k, format!("must be positive, got {v}")));
        }
    }
    if b.nodes < 2 || b.order == 0 {
        return Err(ld.err_at("probe_box", "needs at least 2 nodes and positive order"));
    }
    if o.probes.is_empty() || o.probes.iter().any(|p| !(*p > 0.0)) {
        return Err(ld.err_at("probes", "probe scales must be positive"));
    }
    if !(o.eigen.radius > 0.0) {
        return Err(ld.err_at("radius", "must be positive"));
    }
    Ok(())
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(output(path))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> CliResult<()> {
    let s = serde_json::to_string_pretty(v).map_err(output(path))?;
    write(path, &(s + "\n"))
}

/// Parses argv and runs one command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let (name, common) = match &cli.command {
        Command::Spectrum(c) => ("spectrum", c),
        Command::Local(c) => ("local", c),
        Command::Continue(c) => ("continue", c),
        Command::Check(c) => ("check", c),
    };
    match dispatch(name, common) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("bifurkit {name}: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(name: &str, common: &Common) -> CliResult<i32> {
    let ld = load_config(&common.config)?;
    let out = common
        .out
        .clone()
        .or_else(|| ld.config.out.as_ref().map(|p| ld.resolve(p)))
        .unwrap_or_else(|| PathBuf::from("out"));
    let seed = common.seed.or(ld.config.seed).unwrap_or(checks::DEFAULT_SEED);
    fs::create_dir_all(&out).map_err(output(&out))?;
    match name {
        "spectrum" => cmd_spectrum(&ld, &out),
        "local" => cmd_local(&ld, &out),
        "continue" => cmd_continue(&ld, &out, seed),
        _ => cmd_check(&ld, &out, seed),
    }
}

pub fn spectrum_tsv(rep: &SpectrumReport) -> String {
    let mut s = String::from("lambda\tchi\n");
    for e in &rep.eigenvalues {
        let _ = writeln!(s, "{:.16e}\t{}", e.lambda, e.chi);
    }
    s
}

fn cmd_spectrum(ld: &Loaded, out: &Path) -> CliResult<i32> {
    let params = ld.config.spectrum.as_ref().ok_or_else(|| CliError::Config("missing \"spectrum\" section".into()))?;
    check_curve_options(ld, &params.options)?;
    let (a, b) = params.interval;
    if !(a.is_finite() && b.is_finite()) || a > b {
        return Err(ld.err_at("interval", format!("must be an ordered pair, got [{a}, {b}]")));
    }
    let problem = build_problem(ld)?;
    let rep = if a == b {
        SpectrumReport { interval: (a, b), eigenvalues: vec![], discarded: vec![], degree: 0, noise: 0.0 }
    } else {
        let curve = problem.linearization_curve();
        matcurve::generalized_spectrum_with(&curve, a, b, &params.options).map_err(numerical)?
    };
    write_json(
        &out.join("report.json"),
        &json!({ "command": "spectrum", "problem": ld.config.problem, "warnings": problem.warnings, "spectrum": rep }),
    )?;
    write(&out.join("spectrum.tsv"), &spectrum_tsv(&rep))?;
    println!("{} eigenvalue(s) in ({a}, {b})", rep.eigenvalues.len());
    for e in &rep.eigenvalues {
        println!("  lambda = {:.10}  chi = {}", e.lambda, e.chi);
    }
    Ok(EXIT_OK)
}

fn cmd_local(ld: &Loaded, out: &Path) -> CliResult<i32> {
    let params = ld.config.local.as_ref().ok_or_else(|| CliError::Config("missing \"local\" section".into()))?;
    check_local_options(ld, &params.options)?;
    let problem = build_problem(ld)?;
    let u0 = read_state(ld, &params.u, &params.u_file, &problem, "local")?;
    let la = lsred::local_analysis_with(&problem, params.lambda0, &u0, &params.options).map_err(numerical)?;
    let rep = &la.report;
    write_json(
        &out.join("report.json"),
        &json!({
            "command": "local",
            "problem": ld.config.problem,
            "warnings": problem.warnings,
            "lambda0": la.lambda0,
            "chi": la.chi,
            "half_branch_count": rep.half_branch_count,
            "polygon": rep.polygon,
            "branches": rep.branches,
            "analysis": la,
        }),
    )?;
    println!("lambda0 = {:.10}  chi = {}  N = {}", la.lambda0, la.chi, rep.half_branch_count);
    let verts: Vec<String> = rep.polygon.vertices.iter().map(|v| format!("({},{})", v.ell, v.j)).collect();
    println!("polygon vertices: {}", verts.join(" "));
    Ok(EXIT_OK)
}

fn event_column(branch: &Branch, index: usize) -> String {
    branch.events.iter().filter(|e| e.index == index).map(|e| e.kind.name()).collect::<Vec<_>>().join("|")
}

/// Per-branch plot data: index, λ, ‖u‖_L², ‖u‖_∞, det sign, events.
pub fn branch_csv(problem: &Problem, branch: &Branch) -> String {
    let mut s = String::from("index,lambda,u_l2,u_inf,det_sign,event\n");
    for (i, p) in branch.points.iter().enumerate() {
        let _ = writeln!(
            s,
            "{i},{:.16e},{:.16e},{:.16e},{},{}",
            p.lambda,
            problem.norm_l2(&p.u),
            vec_norm_inf(&p.u),
            p.det_sign,
            event_column(branch, i)
        );
    }
    s
}

/// Every `every`-th point as one line: λ then the state vector.
pub fn states_txt(branch: &Branch, every: usize) -> String {
    let mut s = String::new();
    for p in branch.points.iter().step_by(every.max(1)) {
        let mut line = format!("{:.16e}", p.lambda);
        for v in p.u.iter() {
            let _ = write!(line, " {v:.16e}");
        }
        s.push_str(&line);
        s.push('\n');
    }
    s
}

pub fn write_diagram(path: &Path, d: &Diagram) -> CliResult<()> {
    write_json(path, d)
}

pub fn read_diagram(path: &Path) -> CliResult<Diagram> {
    let text = fs::read_to_string(path).map_err(output(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: line {}: {e}", path.display(), e.line())))
}

fn cmd_continue(ld: &Loaded, out: &Path, seed: u64) -> CliResult<i32> {
    let params = ld.config.continuation.as_ref().ok_or_else(|| CliError::Config("missing \"continue\" section".into()))?;
    let cfg = &params.config;
    cfg.validate().map_err(|e| ld.err_at("config", e))?;
    if params.snapshot_every == Some(0) {
        return Err(ld.err_at("snapshot_every", "must be positive"));
    }
    if let Some((a, b)) = params.ledger_interval {
        if !(a < b) {
            return Err(ld.err_at("ledger_interval", format!("must be an ordered pair, got [{a}, {b}]")));
        }
    }
    let problem = build_problem(ld)?;
    let mut notes: Vec<String> = problem.warnings.clone();
    let (branches, local) = match (&params.singular, &params.start) {
        (Some(s), None) => {
            let u0 = read_state(ld, &s.u, &s.u_file, &problem, "singular")?;
            let (sw, br) = continuation::trace_from_singular(&problem, s.lambda0, &u0, cfg, s.branches.as_deref())
                .map_err(numerical)?;
            if br.is_empty() {
                return Err(CliError::Numerical("no requested departure exists at the singular point".into()));
            }
            (br, Some(json!({ "lambda0": sw.analysis.lambda0, "chi": sw.analysis.chi, "half_branch_count": sw.analysis.report.half_branch_count })))
        }
        (None, Some(st)) => {
            let u = read_state(ld, &st.u, &st.u_file, &problem, "start")?;
            let p = continuation::point_at(&problem, st.lambda, &u, cfg.track_sv);
            if p.residual > 1e-6 * (1.0 + vec_norm_inf(&u)) {
                notes.push(format!("start residual {:e}; the first step corrects onto the branch", p.residual));
            }
            let t = continuation::tangent(&problem, st.lambda, &u, None).map_err(numerical)?;
            let t = if st.direction < 0.0 { -t } else { t };
            (vec![continuation::trace(&problem, &p, &t, cfg, &Default::default())], None)
        }
        _ => return Err(ld.err_at("continue", "give exactly one of \"singular\" or \"start\"")),
    };

    let interval = params
        .ledger_interval
        .or_else(|| problem.trivial_branch.then_some((cfg.lambda_min, cfg.lambda_max)));
    let spectrum = match interval {
        Some((a, b)) => match matcurve::generalized_spectrum(&problem.linearization_curve(), a, b) {
            Ok(s) => Some(s),
            Err(e) => {
                notes.push(format!("trivial spectrum on ({a}, {b}) unavailable: {e}"));
                None
            }
        },
        None => None,
    };
    let d = continuation::diagram(branches, spectrum, cfg.h0);

    let monitors: Vec<MonitorReport> = if params.monitor {
        d.branches.iter().map(|b| continuation::monitor(&problem, b, &problem.checks, seed)).collect()
    } else {
        vec![]
    };
    for (k, b) in d.branches.iter().enumerate() {
        write(&out.join(format!("branch_{k}.csv")), &branch_csv(&problem, b))?;
        if let Some(every) = params.snapshot_every {
            write(&out.join(format!("states_{k}.txt")), &states_txt(b, every))?;
        }
    }
    write_diagram(&out.join("diagram.json"), &d)?;
    let summary: Vec<_> = d
        .branches
        .iter()
        .enumerate()
        .map(|(k, b)| {
            json!({
                "branch": k,
                "local_branch": b.origin.local_branch,
                "termination": b.termination,
                "alternative": b.alternative(),
                "points": b.points.len(),
                "reentry_branch": b.reentry_branch,
                "events": b.events.iter().map(|e| json!({ "index": e.index, "kind": e.kind, "lambda": e.lambda, "confirmed": e.confirmed })).collect::<Vec<_>>(),
                "lambda_range": lambda_range(b),
            })
        })
        .collect();
    let hard = d.branches.iter().any(|b| b.termination == continuation::Termination::StepFailure);
    write_json(
        &out.join("report.json"),
        &json!({
            "command": "continue",
            "problem": ld.config.problem,
            "seed": seed,
            "warnings": notes,
            "singular_point": local,
            "branches": summary,
            "parity_ledger": d.parity_ledger,
            "contact_sums": d.contact_sums,
            "monitors": monitors,
        }),
    )?;
    for (k, b) in d.branches.iter().enumerate() {
        let (lo, hi) = lambda_range(b);
        println!("branch {k}: {:?} after {} points, lambda in [{lo:.6}, {hi:.6}]", b.termination, b.points.len());
    }
    let monitors_ok = monitors.iter().all(|m| m.all_passed());
    if !monitors_ok {
        eprintln!("monitor checks failed; see report.json");
    }
    Ok(if hard || !monitors_ok { EXIT_NUMERICAL } else { EXIT_OK })
}

fn lambda_range(b: &Branch) -> (f64, f64) {
    b.points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.lambda), hi.max(p.lambda)))
}

fn cmd_check(ld: &Loaded, out: &Path, seed: u64) -> CliResult<i32> {
    let params = ld.config.check.clone().unwrap_or_default();
    if params.cases == 0 {
        return Err(ld.err_at("cases", "must be positive"));
    }
    let all = checks::all_suites();
    let chosen: Vec<_> = match &params.suites {
        None => all,
        Some(names) => {
            let mut v = Vec::new();
            for n in names {
                match all.iter().find(|(k, _)| k == n) {
                    Some(s) => v.push(*s),
                    None => {
                        let known: Vec<_> = all.iter().map(|(k, _)| *k).collect();
                        return Err(ld.err_at("suites", format!("unknown suite {n:?}; known: {}", known.join(", "))));
                    }
                }
            }
            v
        }
    };
    let results: Vec<_> = chosen.iter().map(|(_, f)| f(seed, params.cases)).collect();
    let mut table = String::from("suite\tpassed\tcases\tseconds\tstatus\n");
    for r in &results {
        let _ = writeln!(table, "{}\t{}\t{}\t{:.3}\t{}", r.name, r.passed, r.cases, r.seconds, if r.ok() { "PASS" } else { "FAIL" });
    }
    let monitors = match &params.diagram {
        Some(p) => {
            let problem = build_problem(ld)?;
            let d = read_diagram(&ld.resolve(p))?;
            let reps: Vec<MonitorReport> = d.branches.iter().map(|b| continuation::monitor(&problem, b, &problem.checks, seed)).collect();
            for (k, m) in reps.iter().enumerate() {
                for c in &m.results {
                    let _ = writeln!(table, "monitor[{k}] {}\t{}\t{}\t-\t{}", c.check, c.checked - c.failures.len(), c.checked, if c.passed { "PASS" } else { "FAIL" });
                }
            }
            reps
        }
        None => vec![],
    };
    write(&out.join("check.tsv"), &table)?;
    let ok = results.iter().all(|r| r.ok()) && monitors.iter().all(|m| m.all_passed());
    write_json(
        &out.join("report.json"),
        &json!({ "command": "check", "seed": seed, "cases": params.cases, "passed": ok, "suites": results, "monitors": monitors }),
    )?;
    print!("{table}");
    Ok(if ok { EXIT_OK } else { EXIT_NUMERICAL })
}
