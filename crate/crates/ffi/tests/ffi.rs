use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use bifurkit_ffi::*;

fn last_error() -> String {
    let p = bk_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn degenerate_spectrum_and_chi() {
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(bk_problem_degenerate_1d(100, &mut p), BkStatus::Ok);
        assert_eq!(bk_problem_len(p), 100);
        let mut s = ptr::null_mut();
        assert_eq!(bk_spectrum(p, -3.0, 3.0, &mut s), BkStatus::Ok);
        assert_eq!(bk_spectrum_len(s), 1);
        let (mut l, mut c) = (f64::NAN, 0usize);
        assert_eq!(bk_spectrum_get(s, 0, &mut l, &mut c), BkStatus::Ok);
        assert!(l.abs() < 1e-6);
        assert_eq!(c, 2);
        assert_eq!(bk_spectrum_get(s, 1, &mut l, &mut c), BkStatus::OutOfRange);
        assert!(last_error().contains("out of range"));
        let mut chi = 0usize;
        assert_eq!(bk_chi(p, 0.0, &mut chi), BkStatus::Ok);
        assert_eq!(chi, 2);
        bk_spectrum_free(s);
        bk_problem_free(p);
    }
}

#[test]
fn local_report_json() {
    unsafe {
        let json = CString::new(r#"{"kind":"semilinear","n":100,"p":2}"#).unwrap();
        let mut p = ptr::null_mut();
        assert_eq!(bk_problem_from_json(json.as_ptr(), &mut p), BkStatus::Ok);
        let mut r = ptr::null_mut();
        assert_eq!(bk_local_analysis(p, 1.0, ptr::null(), 0, &mut r), BkStatus::Ok);
        assert_eq!(bk_local_chi(r), 1);
        assert_eq!(bk_local_half_branch_count(r), 4);
        let mut s = ptr::null_mut();
        assert_eq!(bk_local_to_json(r, &mut s), BkStatus::Ok);
        let text = CStr::from_ptr(s).to_str().unwrap().to_owned();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["chi"], 1);
        bk_string_free(s);
        bk_local_free(r);
        bk_problem_free(p);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(bk_problem_degenerate_1d(10, &mut p), BkStatus::InvalidArgument);
        assert!(p.is_null());
        assert!(last_error().contains("n >= 50"));

        let bad = CString::new("{\"kind\": \"nope\"}").unwrap();
        assert_eq!(bk_problem_from_json(bad.as_ptr(), &mut p), BkStatus::ConfigError);
        assert!(last_error().contains("line 1"));
        assert_eq!(bk_problem_from_json(ptr::null(), &mut p), BkStatus::NullPointer);

        assert_eq!(bk_problem_degenerate_1d(60, &mut p), BkStatus::Ok);
        let mut r = ptr::null_mut();
        assert_eq!(bk_local_analysis(p, 2.0, ptr::null(), 0, &mut r), BkStatus::NumericalFailure);
        assert!(last_error().contains("regular point"));
        let u = [0.0; 3];
        assert_eq!(bk_local_analysis(p, 0.0, u.as_ptr(), 3, &mut r), BkStatus::InvalidArgument);
        assert_eq!(bk_spectrum(p, 1.0, -1.0, &mut ptr::null_mut()), BkStatus::InvalidArgument);
        bk_problem_free(p);

        // null handles are harmless
        bk_problem_free(ptr::null_mut());
        bk_spectrum_free(ptr::null_mut());
        bk_local_free(ptr::null_mut());
        bk_string_free(ptr::null_mut());
        assert_eq!(bk_spectrum_len(ptr::null()), 0);
    }
}

#[test]
fn header_declares_everything_and_parses_as_c() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = dir.join("include").join("bifurkit.h");
    let text = std::fs::read_to_string(&header).expect("header generated by build.rs");
    for f in [
        "bk_problem_from_json",
        "bk_problem_degenerate_1d",
        "bk_problem_free",
        "bk_spectrum",
        "bk_spectrum_len",
        "bk_spectrum_get",
        "bk_spectrum_free",
        "bk_chi",
        "bk_local_analysis",
        "bk_local_to_json",
        "bk_local_free",
        "bk_string_free",
        "bk_last_error_message",
        "typedef struct BkProblem BkProblem",
        "BkStatus_NumericalFailure = 5",
    ] {
        assert!(text.contains(f), "header lacks {f}");
    }
    let Ok(cc) = Command::new("cc").arg("--version").output() else { return };
    if !cc.status.success() {
        return;
    }
    let src = std::env::temp_dir().join(format!("bk_header_{}.c", std::process::id()));
    std::fs::write(&src, "#include \"bifurkit.h\"\nint main(void) { BkProblem *p = 0; return (int)bk_problem_len(p); }\n").unwrap();
    let st = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(dir.join("include"))
        .arg(&src)
        .status()
        .unwrap();
    let _ = std::fs::remove_file(&src);
    assert!(st.success(), "header does not compile as C99");
}
