//! End-to-end runs of the `bifurkit` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bifurkit::cli::{self, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK};
use tempfile::TempDir;

struct Run {
    dir: TempDir,
    out: Output,
}

impl Run {
    fn code(&self) -> i32 {
        self.out.status.code().unwrap()
    }
    fn stderr(&self) -> String {
        String::from_utf8_lossy(&self.out.stderr).into_owned()
    }
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join("out").join(name)
    }
    fn read(&self, name: &str) -> String {
        fs::read_to_string(self.path(name)).unwrap()
    }
    fn json(&self, name: &str) -> serde_json::Value {
        serde_json::from_str(&self.read(name)).unwrap()
    }
}

fn bifurkit(cmd: &str, config: &str) -> Run {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, config).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_bifurkit"))
        .args([cmd, "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    Run { dir, out }
}

fn tsv_rows(text: &str) -> Vec<(f64, usize)> {
    text.lines()
        .skip(1)
        .map(|l| {
            let mut f = l.split('\t');
            (f.next().unwrap().parse().unwrap(), f.next().unwrap().parse().unwrap())
        })
        .collect()
}

#[test]
fn spectrum_of_the_degenerate_example() {
    let r = bifurkit(
        "spectrum",
        r#"{"schema": 1, "problem": {"kind": "degenerate_1d", "n": 100}, "spectrum": {"interval": [-3, 3]}}"#,
    );
    assert_eq!(r.code(), EXIT_OK, "{}", r.stderr());
    let rows = tsv_rows(&r.read("spectrum.tsv"));
    assert_eq!(rows.len(), 1);
    assert!(rows[0].0.abs() < 1e-8);
    assert_eq!(rows[0].1, 2);
    assert_eq!(r.json("report.json")["spectrum"]["eigenvalues"][0]["chi"], 2);
}

#[test]
fn spectrum_of_the_semilinear_problem() {
    let r = bifurkit(
        "spectrum",
        r#"{"schema": 1, "problem": {"kind": "semilinear", "n": 100, "p": 2}, "spectrum": {"interval": [0, 10]}}"#,
    );
    assert_eq!(r.code(), EXIT_OK, "{}", r.stderr());
    let rows = tsv_rows(&r.read("spectrum.tsv"));
    assert_eq!(rows.len(), 3);
    for ((l, c), k) in rows.iter().zip([1.0, 4.0, 9.0]) {
        assert!((l - k).abs() < 0.01, "{l} vs {k}");
        assert_eq!(*c, 1);
    }
}

#[test]
fn empty_interval_gives_an_empty_report() {
    let r = bifurkit(
        "spectrum",
        r#"{"schema": 1, "problem": {"kind": "degenerate_1d", "n": 100}, "spectrum": {"interval": [1, 1]}}"#,
    );
    assert_eq!(r.code(), EXIT_OK);
    assert_eq!(r.read("spectrum.tsv"), "lambda\tchi\n");
}

#[test]
fn config_errors_exit_with_two_and_name_the_line() {
    let cases = [
        ("{\"schema\": 1,\n \"problem\": {\"kind\": \"degenerate_1d\", \"n\": 100},\n \"spectrum\": {\"interval\": [2, 1]}}", "line 3"),
        ("{\"schema\": 1,\n \"problem\": {\"kind\": \"degenerate_1d\", \"n\": 100},\n \"spectrum\": {\"interval\": [0, 1], \"bogus\": 1}}", "line 3"),
        ("{\"schema\": 1,\n \"problem\": {\"kind\": \"nope\"},\n \"spectrum\": {\"interval\": [0, 1]}}", "line 2"),
        ("{\"schema\": 2, \"problem\": {\"kind\": \"circle\"}}", "schema"),
        ("{\"schema\": 1, \"problem\": {\"kind\": \"degenerate_1d\", \"n\": 10}, \"spectrum\": {\"interval\": [0, 1]}}", "n >= 50"),
        ("{\"schema\": 1,\n \"problem\": {\"kind\": \"degenerate_1d\", \"n\": 100},\n \"spectrum\": {\"interval\": [0, 1],\n  \"options\": {\"window\": -1}}}", "line 4"),
        ("not json", "line 1"),
    ];
    for (text, needle) in cases {
        let r = bifurkit("spectrum", text);
        assert_eq!(r.code(), EXIT_CONFIG, "{text}");
        assert!(r.stderr().contains(needle), "{text}: {}", r.stderr());
    }
}

#[test]
fn bad_arguments_exit_with_two() {
    assert_eq!(cli::run(["bifurkit", "spectrum"]), EXIT_CONFIG);
    assert_eq!(cli::run(["bifurkit", "frobnicate", "--config", "x.json"]), EXIT_CONFIG);
    assert_eq!(cli::run(["bifurkit", "--help"]), EXIT_OK);
}

#[test]
fn local_report_of_the_degenerate_example() {
    let r = bifurkit(
        "local",
        r#"{"schema": 1, "problem": {"kind": "degenerate_1d", "n": 100}, "local": {"lambda0": 0.0}}"#,
    );
    assert_eq!(r.code(), EXIT_OK, "{}", r.stderr());
    let rep = r.json("report.json");
    assert_eq!(rep["chi"], 2);
    assert_eq!(rep["half_branch_count"], 6);
    let verts: Vec<(u64, u64)> = rep["polygon"]["vertices"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| (v["ell"].as_u64().unwrap(), v["j"].as_u64().unwrap()))
        .collect();
    assert_eq!(verts, vec![(0, 2), (1, 1), (3, 0)]);
}

#[test]
fn local_report_of_a_transversal_crossing() {
    let r = bifurkit(
        "local",
        r#"{"schema": 1, "problem": {"kind": "semilinear", "n": 100, "p": 2}, "local": {"lambda0": 1.0}}"#,
    );
    assert_eq!(r.code(), EXIT_OK, "{}", r.stderr());
    let rep = r.json("report.json");
    assert_eq!(rep["chi"], 1);
    assert_eq!(rep["half_branch_count"], 4);
}

#[test]
fn regular_point_is_a_numerical_failure() {
    let r = bifurkit(
        "local",
        r#"{"schema": 1, "problem": {"kind": "degenerate_1d", "n": 100}, "local": {"lambda0": 2.0, "options": {"refine_lambda": false}}}"#,
    );
    assert_eq!(r.code(), EXIT_NUMERICAL);
    assert!(r.stderr().contains("regular point"), "{}", r.stderr());
}

fn assert_csv_shape(text: &str) -> usize {
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "index,lambda,u_l2,u_inf,det_sign,event");
    let mut n = 0;
    for (i, l) in lines.enumerate() {
        let f: Vec<&str> = l.split(',').collect();
        assert_eq!(f.len(), 6, "{l}");
        assert_eq!(f[0].parse::<usize>().unwrap(), i);
        for v in &f[1..4] {
            assert!(v.parse::<f64>().unwrap().is_finite());
        }
        assert!(["-1", "0", "1"].contains(&f[4]));
        n += 1;
    }
    n
}

fn round_trip(path: &Path) {
    let d = cli::read_diagram(path).unwrap();
    let copy = path.with_file_name("copy.json");
    cli::write_diagram(&copy, &d).unwrap();
    assert_eq!(cli::read_diagram(&copy).unwrap(), d);
    assert_eq!(fs::read_to_string(&copy).unwrap(), fs::read_to_string(path).unwrap());
}

#[test]
fn circle_start_closes_and_round_trips() {
    let r = bifurkit(
        "continue",
        r#"{"schema": 1, "problem": {"kind": "circle"},
            "continue": {"start": {"lambda": 1.0, "u": [0.0]}, "config": {"h0": 0.05}, "snapshot_every": 5}}"#,
    );
    assert_eq!(r.code(), EXIT_OK, "{}", r.stderr());
    let n = assert_csv_shape(&r.read("branch_0.csv"));
    assert!(n > 10);
    assert!(r.read("branch_0.csv").contains("loop_closed"));
    assert_eq!(r.json("report.json")["branches"][0]["termination"], "loop_closed");
    let states = r.read("states_0.txt");
    assert_eq!(states.lines().count(), n.div_ceil(5));
    for l in states.lines() {
        let v: Vec<f64> = l.split(' ').map(|x| x.parse().unwrap()).collect();
        assert_eq!(v.len(), 2);
        assert!((v[0] * v[0] + v[1] * v[1] - 1.0).abs() < 1e-8);
    }
    round_trip(&r.path("diagram.json"));
}

#[test]
fn semilinear_continuation_and_stored_monitors() {
    let r = bifurkit(
        "continue",
        r#"{"schema": 1, "problem": {"kind": "semilinear", "n": 60, "p": 2},
            "continue": {"singular": {"lambda0": 1.0}, "config": {"lambda_min": -2, "lambda_max": 6}}}"#,
    );
    assert_eq!(r.code(), EXIT_OK, "{}", r.stderr());
    let rep = r.json("report.json");
    let br = rep["branches"].as_array().unwrap();
    assert_eq!(br.len(), 2);
    assert!(br.iter().all(|b| b["termination"] == "bound_hit"));
    // simple eigenvalues at 1 and 4: the sign a_n flips at each, so P alternates
    let ledger = rep["parity_ledger"].as_array().unwrap();
    let p: Vec<i64> = ledger.iter().map(|e| e["p"].as_i64().unwrap()).collect();
    assert_eq!(p, vec![-1, 1]);
    assert!(ledger.iter().all(|e| e["chi"] == 1 && e["a_next"] == -e["a_prev"].as_i64().unwrap()));
    assert_csv_shape(&r.read("branch_0.csv"));
    round_trip(&r.path("diagram.json"));

    // monitors over the stored diagram from a second config in the same directory
    let cfg = r.dir.path().join("check.json");
    fs::write(
        &cfg,
        r#"{"schema": 1, "problem": {"kind": "semilinear", "n": 60, "p": 2},
            "check": {"cases": 5, "suites": ["sturm"], "diagram": "out/diagram.json"}}"#,
    )
    .unwrap();
    let out = r.dir.path().join("chk");
    let code = cli::run(["bifurkit".as_ref(), "check".as_ref(), "--config".as_ref(), cfg.as_os_str(), "--out".as_ref(), out.as_os_str()]);
    assert_eq!(code, EXIT_OK);
    let table = fs::read_to_string(out.join("check.tsv")).unwrap();
    assert!(table.starts_with("suite\tpassed\tcases\tseconds\tstatus\n"));
    assert!(table.contains("Sturm counts vs bisection oracle\t5\t5\t"));
    assert!(table.contains("monitor[1]"));
}

#[test]
fn check_runs_the_selected_suites() {
    let r = bifurkit("check", r#"{"schema": 1, "problem": {"kind": "circle"}, "check": {"cases": 20, "suites": ["pf", "np", "hull"]}}"#);
    assert_eq!(r.code(), EXIT_OK, "{}", r.stderr());
    let t = r.read("check.tsv");
    assert_eq!(t.lines().count(), 4);
    assert!(t.lines().skip(1).all(|l| l.ends_with("PASS")));
    let r = bifurkit("check", r#"{"schema": 1, "problem": {"kind": "circle"}, "check": {"suites": ["nope"]}}"#);
    assert_eq!(r.code(), EXIT_CONFIG);
}
