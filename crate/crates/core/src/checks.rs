//! Randomized invariant suites with fixed seeds, shared by `bifurkit check` and the tests.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::continuation::{tangent, trace, ContinuationConfig, Point, Termination, TraceContext};
use crate::localform::{newton_polygon, Series2};
use crate::matcurve::{chi, chi_compact, parity, MatrixCurve};
use crate::polyalg::{count_real_roots, Poly};
use crate::problems::{
    fd_jacobian, make_degenerate_1d, make_meancurvature_1d, make_quartic, make_semilinear, Bc, Coef, FnModel, Grid,
    Problem,
};

pub const DEFAULT_SEED: u64 = 20240611;
pub const DEFAULT_CASES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub cases: usize,
    pub passed: usize,
    /// First few failure descriptions.
    pub failures: Vec<String>,
    pub seconds: f64,
}

impl SuiteResult {
    pub fn ok(&self) -> bool {
        self.passed == self.cases && self.cases > 0
    }
}

struct Tally {
    name: &'static str,
    cases: usize,
    passed: usize,
    failures: Vec<String>,
    start: Instant,
}

impl Tally {
    fn new(name: &'static str) -> Tally {
        Tally { name, cases: 0, passed: 0, failures: vec![], start: Instant::now() }
    }

    fn record(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.cases += 1;
        if ok {
            self.passed += 1;
        } else if self.failures.len() < 5 {
            self.failures.push(what());
        }
    }

    fn finish(self) -> SuiteResult {
        SuiteResult {
            name: self.name.to_string(),
            cases: self.cases,
            passed: self.passed,
            failures: self.failures,
            seconds: self.start.elapsed().as_secs_f64(),
        }
    }
}

fn rand_matrix(rng: &mut ChaCha8Rng, n: usize, amp: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| rng.gen_range(-amp..amp))
}

/// I + 0.3 R with |det| bounded away from zero.
fn well_conditioned(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    loop {
        let m = DMatrix::identity(n, n) + rand_matrix(rng, n, 0.3);
        if m.determinant().abs() > 0.2 {
            return m;
        }
    }
}

/// U (λ−λ0)^{m_i}-diagonal V with constant U, V; χ at λ0 is Σ m_i.
fn curve_with_multiplicity(rng: &mut ChaCha8Rng, dim: usize, lambda0: f64, mults: &[usize]) -> MatrixCurve {
    let u = well_conditioned(rng, dim);
    let v = well_conditioned(rng, dim);
    let maxm = mults.iter().cloned().max().unwrap_or(0);
    let mut coeffs = vec![DMatrix::zeros(dim, dim); maxm + 2];
    for (i, &m) in mults.iter().enumerate() {
        let a = rng.gen_range(0.5..2.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let b = rng.gen_range(-0.3..0.3);
        coeffs[m][(i, i)] = a;
        coeffs[m + 1][(i, i)] = b;
    }
    let coeffs = coeffs.into_iter().map(|d| &u * d * &v).collect();
    MatrixCurve::from_taylor(lambda0, coeffs).expect("square coefficients")
}

/// (PF): χ of a product curve is the sum of the factors' χ.
pub fn suite_product_formula(seed: u64, cases: usize) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x01);
    let mut t = Tally::new("PF chi additivity under products");
    for _ in 0..cases {
        let dim = rng.gen_range(2..=3);
        let l0 = rng.gen_range(-1.0..1.0);
        let m1: Vec<usize> = (0..dim).map(|_| rng.gen_range(0..=2)).collect();
        let m2: Vec<usize> = (0..dim).map(|_| rng.gen_range(0..=2)).collect();
        let a = curve_with_multiplicity(&mut rng, dim, l0, &m1);
        let b = curve_with_multiplicity(&mut rng, dim, l0, &m2);
        let p = a.product(&b).expect("same dimension");
        let (ca, cb, cp) = (chi(&a, l0), chi(&b, l0), chi(&p, l0));
        let want: usize = m1.iter().chain(m2.iter()).sum();
        let ok = matches!((&ca, &cb, &cp), (Ok(x), Ok(y), Ok(z)) if x + y == *z && *z == want);
        t.record(ok, || format!("l0={l0} m1={m1:?} m2={m2:?} got {ca:?} {cb:?} {cp:?}"));
    }
    t.finish()
}

/// (NP): (I − P) + (λ−λ0) P with a rank-one projection P has χ = 1.
pub fn suite_normalization(seed: u64, cases: usize) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x02);
    let mut t = Tally::new("NP rank-one projection curves");
    for _ in 0..cases {
        let dim = rng.gen_range(2..=5);
        let l0 = rng.gen_range(-2.0..2.0);
        let x: DVector<f64> = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
        let mut y: DVector<f64> = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
        if y.dot(&x).abs() < 0.2 {
            y += &x;
        }
        let p = &x * y.transpose() / y.dot(&x);
        let id = DMatrix::identity(dim, dim);
        let c = MatrixCurve::from_taylor(l0, vec![&id - &p, p.clone()]).expect("square");
        let r = chi(&c, l0);
        t.record(matches!(r, Ok(1)), || format!("dim={dim} l0={l0}: {r:?}"));
    }
    t.finish()
}

/// Curve with simple or double roots at known points; returns (curve, roots with multiplicity).
fn curve_with_roots(rng: &mut ChaCha8Rng, dim: usize, a: f64, b: f64) -> (MatrixCurve, Vec<(f64, usize)>) {
    let k = rng.gen_range(1..=3usize);
    let mut roots = Vec::new();
    while roots.len() < k {
        let r = rng.gen_range(a + 0.1 * (b - a)..b - 0.1 * (b - a));
        if roots.iter().all(|(q, _): &(f64, usize)| (q - r).abs() > 0.1) {
            roots.push((r, rng.gen_range(1..=2)));
        }
    }
    let u = well_conditioned(rng, dim);
    let v = well_conditioned(rng, dim);
    let rc = roots.clone();
    let scales: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.5..2.0)).collect();
    let c = MatrixCurve::from_fn(dim, move |l| {
        let mut d = DMatrix::from_diagonal(&DVector::from_column_slice(&scales));
        for (i, (r, m)) in rc.iter().enumerate() {
            d[(i % dim, i % dim)] *= (l - r).powi(*m as i32);
        }
        &u * d * &v
    })
    .with_degree(2 * k);
    (c, roots)
}

fn parity_oracle(roots: &[(f64, usize)], a: f64, b: f64) -> i32 {
    let s: usize = roots.iter().filter(|(r, _)| *r > a && *r < b).map(|(_, m)| m).sum();
    if s % 2 == 0 {
        1
    } else {
        -1
    }
}

/// Parity: oracle match, stability under small perturbation, additivity, products.
pub fn suite_parity(seed: u64, cases: usize) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x03);
    let mut t = Tally::new("parity stability/additivity/product");
    for _ in 0..cases {
        let dim = rng.gen_range(2..=3);
        let (a, b) = (-1.0, 1.0);
        let (c1, r1) = curve_with_roots(&mut rng, dim, a, b);
        let (c2, r2) = curve_with_roots(&mut rng, dim, a, b);
        // split point away from every root
        let mut mid: f64 = 0.0;
        while r1.iter().chain(r2.iter()).any(|(r, _)| (r - mid).abs() < 0.03) {
            mid = rng.gen_range(-0.5..0.5);
        }
        let p1 = parity(&c1, a, b);
        let p2 = parity(&c2, a, b);
        let prod = c1.product(&c2).expect("same dimension");
        let pp = parity(&prod, a, b);
        let left = parity(&c1, a, mid);
        let right = parity(&c1, mid, b);
        let e = rand_matrix(&mut rng, dim, 1e-6);
        let ev = c1.clone();
        let pert = MatrixCurve::from_fn(dim, move |l| ev.eval(l) + &e);
        let ps = parity(&pert, a, b);
        let want1 = parity_oracle(&r1, a, b);
        let want2 = parity_oracle(&r2, a, b);
        let ok = match (&p1, &p2, &pp, &left, &right, &ps) {
            (Ok(x), Ok(y), Ok(z), Ok(l), Ok(r), Ok(s)) => {
                *x == want1 && *y == want2 && *z == x * y && l * r == *x && s == x
            }
            _ => false,
        };
        t.record(ok, || format!("roots {r1:?} / {r2:?} mid {mid}: {p1:?} {p2:?} {pp:?} {left:?} {right:?} {ps:?}"));
    }
    t.finish()
}

/// Sturm counts vs known roots and a sampled sign-change oracle.
pub fn suite_sturm(seed: u64, cases: usize) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x04);
    let mut t = Tally::new("Sturm counts vs bisection oracle");
    for _ in 0..cases {
        let k = rng.gen_range(1..=6usize);
        let mut roots: Vec<f64> = Vec::new();
        while roots.len() < k {
            let r = rng.gen_range(-3.0..3.0);
            if roots.iter().all(|q| (q - r).abs() > 0.05) {
                roots.push(r);
            }
        }
        let mut p = Poly::from_roots(&roots);
        for _ in 0..rng.gen_range(0..=2) {
            // complex pair (x - re)² + im²
            let (re, im) = (rng.gen_range(-3.0..3.0), rng.gen_range(0.3..2.0));
            p = p.mul(&Poly::new(vec![re * re + im * im, -2.0 * re, 1.0]));
        }
        let (mut a, mut b) = (rng.gen_range(-4.0..0.0), rng.gen_range(0.0..4.0));
        while roots.iter().any(|r| (r - a).abs() < 0.01) {
            a -= 0.013;
        }
        while roots.iter().any(|r| (r - b).abs() < 0.01) {
            b += 0.017;
        }
        let want = roots.iter().filter(|r| **r > a && **r < b).count();
        // bisection oracle: sign changes on a fine grid, each bracket refined
        let m = 4000;
        let mut sampled = 0;
        let mut prev = p.eval(a);
        for i in 1..=m {
            let x = a + (b - a) * i as f64 / m as f64;
            let v = p.eval(x);
            if v.signum() != prev.signum() && v != 0.0 {
                sampled += 1;
            }
            prev = v;
        }
        let got = count_real_roots(&p, a, b);
        t.record(matches!(got, Ok(c) if c == want) && sampled == want, || {
            format!("roots {roots:?} of {:?} on ({a},{b}): sturm {got:?}, sampled {sampled}, want {want}", p.coeffs)
        });
    }
    t.finish()
}

/// chi_compact(K, μ) and chi of λ ↦ λI − K agree on Jordan constructions.
pub fn suite_jordan(seed: u64, cases: usize) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x05);
    let mut t = Tally::new("chi_compact vs chi on Jordan blocks");
    for _ in 0..cases {
        let mu = rng.gen_range(-1.0..1.0);
        let blocks: Vec<usize> = (0..rng.gen_range(1..=2)).map(|_| rng.gen_range(1..=3)).collect();
        let size: usize = blocks.iter().sum();
        let extra = rng.gen_range(1..=2);
        let n = size + extra;
        let mut j = DMatrix::zeros(n, n);
        let mut at = 0;
        for b in &blocks {
            for i in 0..*b {
                j[(at + i, at + i)] = mu;
                if i + 1 < *b {
                    j[(at + i, at + i + 1)] = 1.0;
                }
            }
            at += b;
        }
        for i in size..n {
            j[(i, i)] = mu + if rng.gen_bool(0.5) { 1.0 } else { -1.0 } * rng.gen_range(1.2..2.0);
        }
        let s = well_conditioned(&mut rng, n);
        let k = &s * j * s.clone().try_inverse().expect("well conditioned");
        let cc = chi_compact(&k, mu);
        let kk = k.clone();
        let curve = MatrixCurve::from_taylor(0.0, vec![-kk, DMatrix::identity(n, n)]).expect("square");
        let cv = chi(&curve, mu);
        t.record(cc == size && matches!(cv, Ok(c) if c == size), || format!("blocks {blocks:?} mu {mu}: compact {cc}, chi {cv:?}"));
    }
    t.finish()
}

/// Analytic Jacobians of the built-in problems vs central differences.
pub fn suite_jacobian(seed: u64, cases: usize) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x06);
    let mut t = Tally::new("Jacobian finite-difference consistency");
    let problems: Vec<Problem> = vec![
        make_degenerate_1d(60).expect("valid"),
        make_semilinear(40, Coef::Poly { coeffs: vec![1.0, -0.3] }, 3).expect("valid"),
        make_quartic(40, Coef::constant(1.0), Coef::constant(0.5), -1.0).expect("valid"),
        make_meancurvature_1d(41, Coef::Cos { amp: 1.0, freq: 6.0, phase: 0.0 }).expect("valid"),
    ];
    for c in 0..cases {
        let p = &problems[c % problems.len()];
        let lambda = rng.gen_range(-3.0..3.0);
        let u = DVector::from_fn(p.n(), |_, _| rng.gen_range(-1.0..1.0));
        let (jf, lf) = fd_jacobian(p, lambda, &u, 1e-6);
        let j = p.jac_u(lambda, &u);
        let jl = p.jac_lambda(lambda, &u);
        let scale = 1.0 + crate::linalg::norm_inf(&j);
        let err = crate::linalg::norm_inf(&(&j - &jf)).max((&jl - &lf).amax());
        t.record(err <= 1e-5 * scale, || format!("{} at lambda={lambda}: err {err:e} vs {scale:e}", p.name));
    }
    t.finish()
}

/// Every support point of g lies on or above every edge line of its Newton polygon.
pub fn suite_hull(seed: u64, cases: usize) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x07);
    let mut t = Tally::new("Newton polygon hull property");
    let mut done = 0;
    while done < cases {
        let order = 8;
        let mut vals = Vec::new();
        let chi = rng.gen_range(1..=4usize);
        vals.push(((chi, 0), rng.gen_range(0.5..2.0)));
        for _ in 0..rng.gen_range(2..=8) {
            let i = rng.gen_range(0..=order);
            let j = rng.gen_range(1..=order - i.min(order - 1));
            if i + j <= order {
                vals.push(((i, j), rng.gen_range(-2.0..2.0)));
            }
        }
        let g = Series2::exact(order, vals);
        let Ok(poly) = newton_polygon(&g) else { continue };
        done += 1;
        let support: Vec<(i64, i64)> = g.significant().map(|s| (s.j as i64, s.i as i64)).collect();
        let mut ok = poly.vertices.iter().all(|v| support.contains(&(v.ell as i64, v.j as i64)));
        let mut prev_slope = f64::NEG_INFINITY;
        for e in &poly.edges {
            let a = &poly.vertices[e.from];
            let b = &poly.vertices[e.to];
            let (dl, dj) = (b.ell as i64 - a.ell as i64, b.j as i64 - a.j as i64);
            for &(l, j) in &support {
                let cross = dl * (j - a.j as i64) - dj * (l - a.ell as i64);
                ok &= cross >= 0;
            }
            let slope = dj as f64 / dl as f64;
            ok &= slope > prev_slope;
            prev_slope = slope;
        }
        t.record(ok, || format!("support {support:?} vertices {:?}", poly.vertex_pairs()));
    }
    t.finish()
}

fn circle_problem(radius: f64, center: (f64, f64)) -> Problem {
    let (cl, cu) = center;
    let model = FnModel {
        residual: Box::new(move |l, u| DVector::from_vec(vec![(u[0] - cu).powi(2) + (l - cl).powi(2) - radius * radius])),
        jac_u: Box::new(move |_, u| DMatrix::from_element(1, 1, 2.0 * (u[0] - cu))),
        jac_lambda: Box::new(move |l, _| DVector::from_vec(vec![2.0 * (l - cl)])),
    };
    Problem::new("circle", Grid::algebraic(1), (Bc::Dirichlet, Bc::Dirichlet), Arc::new(model), false)
}

/// Continuation around random circles closes and stays on the circle.
pub fn suite_circle(seed: u64, cases: usize) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x08);
    let mut t = Tally::new("loop closure on the circle oracle");
    for _ in 0..cases {
        let r = rng.gen_range(0.5..2.0);
        let c = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let th = rng.gen_range(0.0..std::f64::consts::TAU);
        let p = circle_problem(r, c);
        let (l, u) = (c.0 + r * th.cos(), c.1 + r * th.sin());
        let start = Point { lambda: l, u: DVector::from_element(1, u), step: 0.0, det_sign: 1, smallest_sv: 1.0, residual: 0.0 };
        let cfg = ContinuationConfig {
            h0: rng.gen_range(0.02..0.08) * r,
            max_steps: 20000,
            detect_events: false,
            track_sv: false,
            ..Default::default()
        };
        let Ok(t0) = tangent(&p, l, &start.u, None) else {
            t.record(false, || "tangent failed at the start".into());
            continue;
        };
        let b = trace(&p, &start, &t0, &cfg, &TraceContext::default());
        let on = b.points.iter().all(|q| ((q.u[0] - c.1).powi(2) + (q.lambda - c.0).powi(2) - r * r).abs() <= 1e-9 * (1.0 + r * r));
        // the loop must have gone around: some point near the antipode
        let far = b.points.iter().any(|q| ((q.u[0] - u).powi(2) + (q.lambda - l).powi(2)).sqrt() > 1.9 * r);
        t.record(b.termination == Termination::LoopClosed && on && far, || {
            format!("r={r} c={c:?}: {:?} after {} points, on={on} far={far}", b.termination, b.points.len())
        });
    }
    t.finish()
}

pub type Suite = fn(u64, usize) -> SuiteResult;

pub fn all_suites() -> Vec<(&'static str, Suite)> {
    vec![
        ("pf", suite_product_formula as Suite),
        ("np", suite_normalization),
        ("parity", suite_parity),
        ("sturm", suite_sturm),
        ("jordan", suite_jordan),
        ("jacobian", suite_jacobian),
        ("hull", suite_hull),
        ("circle", suite_circle),
    ]
}

pub fn run_all(seed: u64, cases: usize) -> Vec<SuiteResult> {
    all_suites().into_iter().map(|(_, f)| f(seed, cases)).collect()
}
