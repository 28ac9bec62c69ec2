//! Discretization behaviour of the built-in problems.

use bifurkit::matcurve;
use bifurkit::problems::{self, fd_jacobian, Coef, ProblemSpec, Stencil};
use nalgebra::DVector;

#[test]
fn standard_stencil_splits_the_double_eigenvalue() {
    // μ(λ) ≈ h²/12 - λ²/4 on the plain 3-point stencil, so the roots sit near ±h/√3
    let mut prev = None;
    for n in [100, 200, 400] {
        let p = problems::make_degenerate_1d_with(n, Stencil::Standard).unwrap();
        let s = matcurve::generalized_spectrum(&p.linearization_curve(), -3.0, 3.0).unwrap();
        let l: Vec<f64> = s.eigenvalues.iter().map(|e| e.lambda).collect();
        assert_eq!(l.len(), 2, "n={n}: {l:?}");
        assert!(s.eigenvalues.iter().all(|e| e.chi == 1));
        let h = p.grid.h;
        let want = h / 3f64.sqrt();
        assert!((l[1] - want).abs() < 0.05 * want && (l[0] + want).abs() < 0.05 * want, "n={n}: {l:?} vs ±{want}");
        if let Some(q) = prev {
            let ratio: f64 = q / l[1];
            assert!((ratio - 2.0).abs() < 0.05, "ratio {ratio}");
        }
        prev = Some(l[1]);
    }
}

#[test]
fn sine_matched_stencil_keeps_the_double_eigenvalue() {
    for n in [60, 100, 200] {
        let p = problems::make_degenerate_1d(n).unwrap();
        let s = matcurve::generalized_spectrum(&p.linearization_curve(), -3.0, 3.0).unwrap();
        assert_eq!(s.eigenvalues.len(), 1);
        assert_eq!(s.eigenvalues[0].chi, 2);
        assert!(s.eigenvalues[0].lambda.abs() < 1e-9);
    }
}

#[test]
fn semilinear_eigenvalues_converge_at_second_order() {
    let mut errs = Vec::new();
    for n in [50, 100, 200] {
        let p = problems::make_semilinear(n, Coef::constant(1.0), 2).unwrap();
        let s = matcurve::generalized_spectrum(&p.linearization_curve(), 0.0, 5.0).unwrap();
        assert_eq!(s.eigenvalues.len(), 2);
        errs.push((s.eigenvalues[1].lambda - 4.0).abs());
    }
    for w in errs.windows(2) {
        let r = w[0] / w[1];
        assert!((r - 4.0).abs() < 0.3, "ratio {r} from {errs:?}");
    }
}

fn specs() -> Vec<ProblemSpec> {
    let text = r#"[
        {"kind": "degenerate_1d", "n": 60},
        {"kind": "degenerate_1d", "n": 60, "stencil": "standard"},
        {"kind": "semilinear", "n": 60, "a": {"type": "sin", "amp": 1.0, "freq": 1.0, "phase": 0.5}, "p": 3},
        {"kind": "quartic", "n": 60, "alpha": {"type": "const", "value": 1.0}, "beta": {"type": "poly", "coeffs": [1.0, 0.5]}, "sign_alpha": -1},
        {"kind": "mean_curvature_1d", "n": 60, "a": {"type": "const", "value": 1.0}},
        {"kind": "circle"},
        {"kind": "scalar_fold"},
        {"kind": "scalar_linear", "b": 2.0}
    ]"#;
    serde_json::from_str(text).unwrap()
}

#[test]
fn analytic_jacobians_match_finite_differences() {
    for spec in specs() {
        let p = spec.build().unwrap();
        let u = DVector::from_fn(p.n(), |i, _| 0.3 * ((i + 1) as f64 * 0.7).sin());
        let lambda = 0.8;
        let (ju, jl) = fd_jacobian(&p, lambda, &u, 1e-6);
        let du = (p.jac_u(lambda, &u) - ju).abs().max();
        let dl = (p.jac_lambda(lambda, &u) - jl).abs().max();
        let scale = p.jac_u(lambda, &u).abs().max().max(1.0);
        assert!(du <= 1e-6 * scale, "{}: jac_u off by {du:e} (scale {scale:e})", p.name);
        assert!(dl <= 1e-5 * scale, "{}: jac_lambda off by {dl:e}", p.name);
    }
}

#[test]
fn trivial_branch_is_a_solution() {
    for spec in specs() {
        let p = spec.build().unwrap();
        if !p.trivial_branch {
            continue;
        }
        for l in [-2.0, 0.0, 1.5] {
            assert!(p.residual(l, &p.zero_state()).amax() == 0.0, "{} at {l}", p.name);
        }
    }
}

#[test]
fn specs_round_trip() {
    for spec in specs() {
        let p = spec.build().unwrap();
        let back: ProblemSpec = serde_json::from_str(&serde_json::to_string(p.spec.as_ref().unwrap()).unwrap()).unwrap();
        assert_eq!(back.build().unwrap().n(), p.n());
    }
}

#[test]
fn bad_specs_are_rejected() {
    for text in [
        r#"{"kind": "degenerate_1d", "n": 10}"#,
        r#"{"kind": "semilinear", "n": 60, "a": {"type": "const", "value": 1.0}, "p": 1}"#,
    ] {
        let spec: ProblemSpec = serde_json::from_str(text).unwrap();
        assert!(spec.build().is_err(), "{text}");
    }
    assert!(serde_json::from_str::<ProblemSpec>(r#"{"kind": "nope"}"#).is_err());
}
