//! Finite-difference discretizations of one-dimensional boundary value problems.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcurve::MatrixCurve;

/// Coefficient functions of x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Coef {
    Const { value: f64 },
    /// Σ coeffs[k] x^k.
    Poly { coeffs: Vec<f64> },
    /// amp · sin(freq·x + phase).
    Sin { amp: f64, freq: f64, #[serde(default)] phase: f64 },
    Cos { amp: f64, freq: f64, #[serde(default)] phase: f64 },
    /// amp · exp(rate·x).
    Exp { amp: f64, rate: f64 },
    /// values[k] on [breaks[k-1], breaks[k]); one more value than breaks.
    Piecewise { breaks: Vec<f64>, values: Vec<f64> },
    Sum { terms: Vec<Coef> },
}

impl Coef {
    pub fn constant(value: f64) -> Coef {
        Coef::Const { value }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Coef::Const { value } => *value,
            Coef::Poly { coeffs } => coeffs.iter().rev().fold(0.0, |a, c| a * x + c),
            Coef::Sin { amp, freq, phase } => amp * (freq * x + phase).sin(),
            Coef::Cos { amp, freq, phase } => amp * (freq * x + phase).cos(),
            Coef::Exp { amp, rate } => amp * (rate * x).exp(),
            Coef::Piecewise { breaks, values } => {
                let k = breaks.iter().take_while(|b| x >= **b).count();
                values[k.min(values.len() - 1)]
            }
            Coef::Sum { terms } => terms.iter().map(|t| t.eval(x)).sum(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Coef::Piecewise { breaks, values } => {
                if values.len() != breaks.len() + 1 {
                    return Err(Error::InvalidArgument("piecewise needs one more value than breaks".into()));
                }
                if breaks.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::InvalidArgument("piecewise breaks must increase".into()));
                }
                Ok(())
            }
            Coef::Sum { terms } => terms.iter().try_for_each(|t| t.validate()),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bc {
    Dirichlet,
    Neumann,
}

/// Second-difference scaling. `SineMatched` replaces 1/h² by
/// k²/(2(1-cos kh)), k = π/L, which makes the lowest Dirichlet mode exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Stencil {
    #[default]
    Standard,
    SineMatched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub domain: (f64, f64),
    pub x: Vec<f64>,
    pub h: f64,
    /// Trapezoid weights of the unknowns.
    pub weights: Vec<f64>,
}

impl Grid {
    /// n interior points, zero boundary values eliminated.
    pub fn dirichlet(domain: (f64, f64), n: usize) -> Grid {
        let h = (domain.1 - domain.0) / (n + 1) as f64;
        let x = (1..=n).map(|i| domain.0 + i as f64 * h).collect();
        Grid { domain, x, h, weights: vec![h; n] }
    }

    /// n points including both endpoints.
    pub fn neumann(domain: (f64, f64), n: usize) -> Grid {
        let h = (domain.1 - domain.0) / (n - 1) as f64;
        let x = (0..n).map(|i| domain.0 + i as f64 * h).collect();
        let mut weights = vec![h; n];
        weights[0] = 0.5 * h;
        weights[n - 1] = 0.5 * h;
        Grid { domain, x, h, weights }
    }

    /// Unit weights for algebraic toy models.
    pub fn algebraic(n: usize) -> Grid {
        Grid { domain: (0.0, 0.0), x: vec![0.0; n], h: 1.0, weights: vec![1.0; n] }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

fn second_diff_coef(stencil: Stencil, domain: (f64, f64), h: f64) -> f64 {
    match stencil {
        Stencil::Standard => 1.0 / (h * h),
        Stencil::SineMatched => {
            let k = PI / (domain.1 - domain.0);
            k * k / (2.0 * (1.0 - (k * h).cos()))
        }
    }
}

/// Monitor checks a problem declares applicable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum Check {
    /// 0 < λ ≤ 4(1+√2)² and ‖u‖∞ ≤ √λ + 1 on positive solutions (slack 10h).
    PositiveLoopBounds,
    /// Points with |λ| + ‖u‖∞ ≤ eps are strictly one-signed.
    SmallSolutionsOneSigned { eps: f64 },
    /// Newton at λ = 0 from random small seeds finds only u = 0.
    NoNontrivialAtZero { seeds: usize, amplitude: f64 },
    /// Positive solutions only for λ < lambda_max.
    PositiveOnlyBelow { lambda_max: f64 },
    /// Face gradients above the threshold flag a singular solution.
    GradientSentinel { threshold: f64 },
}

pub trait Model: Send + Sync {
    fn residual(&self, lambda: f64, u: &DVector<f64>) -> DVector<f64>;
    fn jac_u(&self, lambda: f64, u: &DVector<f64>) -> DMatrix<f64>;
    fn jac_lambda(&self, lambda: f64, u: &DVector<f64>) -> DVector<f64>;
}

type ResFn = dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync;
type JacFn = dyn Fn(f64, &DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// A model given by closures.
pub struct FnModel {
    pub residual: Box<ResFn>,
    pub jac_u: Box<JacFn>,
    pub jac_lambda: Box<ResFn>,
}

impl Model for FnModel {
    fn residual(&self, lambda: f64, u: &DVector<f64>) -> DVector<f64> {
        (self.residual)(lambda, u)
    }
    fn jac_u(&self, lambda: f64, u: &DVector<f64>) -> DMatrix<f64> {
        (self.jac_u)(lambda, u)
    }
    fn jac_lambda(&self, lambda: f64, u: &DVector<f64>) -> DVector<f64> {
        (self.jac_lambda)(lambda, u)
    }
}

/// Problem configuration, also used by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    #[serde(rename = "degenerate_1d")]
    Degenerate1d {
        n: usize,
        #[serde(default = "default_matched")]
        stencil: Stencil,
    },
    Semilinear {
        n: usize,
        #[serde(default = "unit_coef")]
        a: Coef,
        p: u32,
        #[serde(default)]
        stencil: Stencil,
    },
    Quartic {
        n: usize,
        alpha: Coef,
        beta: Coef,
        sign_alpha: f64,
        #[serde(default)]
        stencil: Stencil,
    },
    #[serde(rename = "mean_curvature_1d")]
    MeanCurvature1d {
        n: usize,
        a: Coef,
    },
    Circle,
    ScalarFold,
    ScalarLinear {
        b: f64,
    },
}

fn default_matched() -> Stencil {
    Stencil::SineMatched
}

fn unit_coef() -> Coef {
    Coef::constant(1.0)
}

impl ProblemSpec {
    pub fn build(&self) -> Result<Problem> {
        match self {
            ProblemSpec::Degenerate1d { n, stencil } => make_degenerate_1d_with(*n, *stencil),
            ProblemSpec::Semilinear { n, a, p, stencil } => make_semilinear_with(*n, a.clone(), *p, *stencil),
            ProblemSpec::Quartic { n, alpha, beta, sign_alpha, stencil } => {
                make_quartic_with(*n, alpha.clone(), beta.clone(), *sign_alpha, *stencil)
            }
            ProblemSpec::MeanCurvature1d { n, a } => make_meancurvature_1d(*n, a.clone()),
            ProblemSpec::Circle => Ok(circle()),
            ProblemSpec::ScalarFold => Ok(scalar_fold()),
            ProblemSpec::ScalarLinear { b } => Ok(scalar_linear(*b)),
        }
    }
}

#[derive(Clone)]
pub struct Problem {
    pub name: String,
    pub grid: Grid,
    pub bc: (Bc, Bc),
    pub checks: Vec<Check>,
    /// F(λ, 0) = 0 for every λ.
    pub trivial_branch: bool,
    pub warnings: Vec<String>,
    pub spec: Option<ProblemSpec>,
    /// Polynomial degree of D_uF in λ, when known; bounds the determinant degree.
    pub lambda_degree: Option<usize>,
    model: Arc<dyn Model>,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("n", &self.n())
            .field("bc", &self.bc)
            .field("checks", &self.checks)
            .finish()
    }
}

impl Problem {
    pub fn new(name: &str, grid: Grid, bc: (Bc, Bc), model: Arc<dyn Model>, trivial_branch: bool) -> Problem {
        Problem {
            name: name.to_string(),
            grid,
            bc,
            checks: vec![],
            trivial_branch,
            warnings: vec![],
            spec: None,
            lambda_degree: None,
            model,
        }
    }

    pub fn n(&self) -> usize {
        self.grid.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.grid.weights
    }

    pub fn residual(&self, lambda: f64, u: &DVector<f64>) -> DVector<f64> {
        self.model.residual(lambda, u)
    }

    pub fn jac_u(&self, lambda: f64, u: &DVector<f64>) -> DMatrix<f64> {
        self.model.jac_u(lambda, u)
    }

    pub fn jac_lambda(&self, lambda: f64, u: &DVector<f64>) -> DVector<f64> {
        self.model.jac_lambda(lambda, u)
    }

    /// λ ↦ D_uF(λ, u0).
    pub fn linearization_curve_at(&self, u0: &DVector<f64>) -> MatrixCurve {
        let m = self.model.clone();
        let u0 = u0.clone();
        let c = MatrixCurve::from_fn(self.n(), move |l| m.jac_u(l, &u0));
        match self.lambda_degree {
            Some(d) => c.with_degree(d),
            None => c,
        }
    }

    pub fn linearization_curve(&self) -> MatrixCurve {
        self.linearization_curve_at(&DVector::zeros(self.n()))
    }

    pub fn inner(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        a.iter().zip(b.iter()).zip(self.grid.weights.iter()).map(|((x, y), w)| x * y * w).sum()
    }

    pub fn norm_l2(&self, u: &DVector<f64>) -> f64 {
        self.inner(u, u).sqrt()
    }

    pub fn zero_state(&self) -> DVector<f64> {
        DVector::zeros(self.n())
    }

    /// Samples a coefficient on the grid.
    pub fn sample(&self, c: &Coef) -> DVector<f64> {
        DVector::from_iterator(self.n(), self.grid.x.iter().map(|x| c.eval(*x)))
    }
}

struct Degenerate {
    c2: f64,
    c1: f64,
}

impl Model for Degenerate {
    fn residual(&self, l: f64, u: &DVector<f64>) -> DVector<f64> {
        let n = u.len();
        DVector::from_fn(n, |i, _| {
            let um = if i > 0 { u[i - 1] } else { 0.0 };
            let up = if i + 1 < n { u[i + 1] } else { 0.0 };
            let ui = u[i];
            self.c2 * (up - 2.0 * ui + um) + l * self.c1 * (up - um) + ui + (l - ui * ui) * ui * ui
        })
    }
    fn jac_u(&self, l: f64, u: &DVector<f64>) -> DMatrix<f64> {
        let n = u.len();
        let mut j = DMatrix::zeros(n, n);
        for i in 0..n {
            let ui = u[i];
            j[(i, i)] = -2.0 * self.c2 + 1.0 + 2.0 * l * ui - 4.0 * ui * ui * ui;
            if i > 0 {
                j[(i, i - 1)] = self.c2 - l * self.c1;
            }
            if i + 1 < n {
                j[(i, i + 1)] = self.c2 + l * self.c1;
            }
        }
        j
    }
    fn jac_lambda(&self, _l: f64, u: &DVector<f64>) -> DVector<f64> {
        let n = u.len();
        DVector::from_fn(n, |i, _| {
            let um = if i > 0 { u[i - 1] } else { 0.0 };
            let up = if i + 1 < n { u[i + 1] } else { 0.0 };
            self.c1 * (up - um) + u[i] * u[i]
        })
    }
}

/// D2 u + λ u + Σ_k c_k(x) u^{p_k}.
struct Semilinear {
    c2: f64,
    terms: Vec<(DVector<f64>, u32)>,
}

impl Semilinear {
    fn d2(&self, u: &DVector<f64>, i: usize) -> f64 {
        let n = u.len();
        let um = if i > 0 { u[i - 1] } else { 0.0 };
        let up = if i + 1 < n { u[i + 1] } else { 0.0 };
        self.c2 * (up - 2.0 * u[i] + um)
    }
}

impl Model for Semilinear {
    fn residual(&self, l: f64, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(u.len(), |i, _| {
            let nl: f64 = self.terms.iter().map(|(c, p)| c[i] * u[i].powi(*p as i32)).sum();
            self.d2(u, i) + l * u[i] + nl
        })
    }
    fn jac_u(&self, l: f64, u: &DVector<f64>) -> DMatrix<f64> {
        let n = u.len();
        let mut j = DMatrix::zeros(n, n);
        for i in 0..n {
            let dnl: f64 = self
                .terms
                .iter()
                .map(|(c, p)| *p as f64 * c[i] * u[i].powi(*p as i32 - 1))
                .sum();
            j[(i, i)] = -2.0 * self.c2 + l + dnl;
            if i > 0 {
                j[(i, i - 1)] = self.c2;
            }
            if i + 1 < n {
                j[(i, i + 1)] = self.c2;
            }
        }
        j
    }
    fn jac_lambda(&self, _l: f64, u: &DVector<f64>) -> DVector<f64> {
        u.clone()
    }
}

fn flux(s: f64) -> f64 {
    s / (1.0 + s * s).sqrt()
}

fn dflux(s: f64) -> f64 {
    (1.0 + s * s).powf(-1.5)
}

struct MeanCurvature {
    h: f64,
    a: DVector<f64>,
}

impl MeanCurvature {
    /// Face gradients s_{i+1/2}, i = 0..n-2.
    fn faces(&self, u: &DVector<f64>) -> Vec<f64> {
        (0..u.len() - 1).map(|i| (u[i + 1] - u[i]) / self.h).collect()
    }
    /// Gradient at the face left (right) of node i, with ghost reflection.
    fn left_right(s: &[f64], i: usize) -> (f64, f64) {
        let n = s.len() + 1;
        let right = if i + 1 < n { s[i] } else { -s[n - 2] };
        let left = if i > 0 { s[i - 1] } else { -s[0] };
        (left, right)
    }
}

impl Model for MeanCurvature {
    fn residual(&self, l: f64, u: &DVector<f64>) -> DVector<f64> {
        let s = self.faces(u);
        DVector::from_fn(u.len(), |i, _| {
            let (sl, sr) = Self::left_right(&s, i);
            (flux(sr) - flux(sl)) / self.h + l * self.a[i] * u[i]
        })
    }
    fn jac_u(&self, l: f64, u: &DVector<f64>) -> DMatrix<f64> {
        let n = u.len();
        let s = self.faces(u);
        let h2 = self.h * self.h;
        let mut j = DMatrix::zeros(n, n);
        for i in 0..n {
            let (sl, sr) = Self::left_right(&s, i);
            let (ql, qr) = (dflux(sl), dflux(sr));
            j[(i, i)] = -(ql + qr) / h2 + l * self.a[i];
            if i == 0 {
                j[(0, 1)] = (ql + qr) / h2;
            } else if i == n - 1 {
                j[(i, i - 1)] = (ql + qr) / h2;
            } else {
                j[(i, i - 1)] = ql / h2;
                j[(i, i + 1)] = qr / h2;
            }
        }
        j
    }
    fn jac_lambda(&self, _l: f64, u: &DVector<f64>) -> DVector<f64> {
        u.component_mul(&self.a)
    }
}

pub fn make_degenerate_1d(n: usize) -> Result<Problem> {
    make_degenerate_1d_with(n, Stencil::SineMatched)
}

/// u'' + λu' + u + (λ - u²)u² = 0 on (0, π), u(0) = u(π) = 0.
pub fn make_degenerate_1d_with(n: usize, stencil: Stencil) -> Result<Problem> {
    if n < 50 {
        return Err(Error::InvalidArgument(format!("degenerate_1d needs n >= 50, got {n}")));
    }
    let grid = Grid::dirichlet((0.0, PI), n);
    let model = Degenerate { c2: second_diff_coef(stencil, grid.domain, grid.h), c1: 0.5 / grid.h };
    let mut p = Problem::new("degenerate_1d", grid, (Bc::Dirichlet, Bc::Dirichlet), Arc::new(model), true);
    p.lambda_degree = Some(1);
    p.checks = vec![
        Check::PositiveLoopBounds,
        Check::SmallSolutionsOneSigned { eps: 0.3 },
        Check::NoNontrivialAtZero { seeds: 20, amplitude: 0.3 },
    ];
    p.spec = Some(ProblemSpec::Degenerate1d { n, stencil });
    Ok(p)
}

pub fn make_semilinear(n: usize, a: Coef, p: u32) -> Result<Problem> {
    make_semilinear_with(n, a, p, Stencil::Standard)
}

/// u'' + λu + a(x)u^p = 0 on (0, π), Dirichlet.
pub fn make_semilinear_with(n: usize, a: Coef, p: u32, stencil: Stencil) -> Result<Problem> {
    if p < 2 {
        return Err(Error::InvalidArgument(format!("semilinear needs p >= 2, got {p}")));
    }
    if n < 3 {
        return Err(Error::InvalidArgument("semilinear needs n >= 3".into()));
    }
    a.validate()?;
    let grid = Grid::dirichlet((0.0, PI), n);
    let av = DVector::from_iterator(n, grid.x.iter().map(|x| a.eval(*x)));
    let model = Semilinear { c2: second_diff_coef(stencil, grid.domain, grid.h), terms: vec![(av, p)] };
    let mut pr = Problem::new("semilinear", grid, (Bc::Dirichlet, Bc::Dirichlet), Arc::new(model), true);
    pr.lambda_degree = Some(1);
    pr.checks = vec![Check::SmallSolutionsOneSigned { eps: 0.0 }];
    pr.spec = Some(ProblemSpec::Semilinear { n, a, p, stencil });
    Ok(pr)
}

pub fn make_quartic(n: usize, alpha: Coef, beta: Coef, sign_alpha: f64) -> Result<Problem> {
    make_quartic_with(n, alpha, beta, sign_alpha, Stencil::Standard)
}

/// w'' + ρw ± α(x)w² + β(x)w⁴ = 0 on (0, π), Dirichlet; ρ is the parameter.
pub fn make_quartic_with(n: usize, alpha: Coef, beta: Coef, sign_alpha: f64, stencil: Stencil) -> Result<Problem> {
    if sign_alpha.abs() != 1.0 {
        return Err(Error::InvalidArgument("sign_alpha must be +1 or -1".into()));
    }
    if n < 3 {
        return Err(Error::InvalidArgument("quartic needs n >= 3".into()));
    }
    alpha.validate()?;
    beta.validate()?;
    let grid = Grid::dirichlet((0.0, PI), n);
    let av = DVector::from_iterator(n, grid.x.iter().map(|x| alpha.eval(*x)));
    let bv = DVector::from_iterator(n, grid.x.iter().map(|x| beta.eval(*x)));
    if av.iter().any(|v| *v <= 0.0) || bv.iter().any(|v| *v <= 0.0) {
        return Err(Error::InvalidArgument("alpha and beta must be positive on the grid".into()));
    }
    let model = Semilinear {
        c2: second_diff_coef(stencil, grid.domain, grid.h),
        terms: vec![(av * sign_alpha, 2), (bv, 4)],
    };
    let mut pr = Problem::new("quartic", grid, (Bc::Dirichlet, Bc::Dirichlet), Arc::new(model), true);
    pr.lambda_degree = Some(1);
    pr.checks = vec![Check::PositiveOnlyBelow { lambda_max: 1.0 }];
    pr.spec = Some(ProblemSpec::Quartic { n, alpha, beta, sign_alpha, stencil });
    Ok(pr)
}

/// (u'/√(1+u'²))' + λ a(x) u = 0 on (0, 1), u'(0) = u'(1) = 0; n nodes including endpoints.
pub fn make_meancurvature_1d(n: usize, a: Coef) -> Result<Problem> {
    if n < 3 {
        return Err(Error::InvalidArgument("mean_curvature_1d needs n >= 3".into()));
    }
    a.validate()?;
    let grid = Grid::neumann((0.0, 1.0), n);
    let av = DVector::from_iterator(n, grid.x.iter().map(|x| a.eval(*x)));
    let integral: f64 = av.iter().zip(grid.weights.iter()).map(|(v, w)| v * w).sum();
    let model = MeanCurvature { h: grid.h, a: av };
    let mut pr = Problem::new("mean_curvature_1d", grid, (Bc::Neumann, Bc::Neumann), Arc::new(model), true);
    pr.lambda_degree = Some(1);
    if integral >= 0.0 {
        pr.warnings.push(format!(
            "integral of a is {integral:.6e} >= 0: configuration outside the case where the principal eigenvalue is 0"
        ));
    }
    pr.checks = vec![Check::GradientSentinel { threshold: 1e3 }];
    pr.spec = Some(ProblemSpec::MeanCurvature1d { n, a });
    Ok(pr)
}

fn scalar(name: &str, f: fn(f64, f64) -> f64, fu: fn(f64, f64) -> f64, fl: fn(f64, f64) -> f64, trivial: bool) -> Problem {
    let model = FnModel {
        residual: Box::new(move |l, u| DVector::from_element(1, f(l, u[0]))),
        jac_u: Box::new(move |l, u| DMatrix::from_element(1, 1, fu(l, u[0]))),
        jac_lambda: Box::new(move |l, u| DVector::from_element(1, fl(l, u[0]))),
    };
    let mut p = Problem::new(name, Grid::algebraic(1), (Bc::Dirichlet, Bc::Dirichlet), Arc::new(model), trivial);
    p.lambda_degree = Some(0);
    p
}

/// u² + λ² - 1 = 0.
pub fn circle() -> Problem {
    let mut p = scalar("circle", |l, u| u * u + l * l - 1.0, |_, u| 2.0 * u, |l, _| 2.0 * l, false);
    p.spec = Some(ProblemSpec::Circle);
    p
}

/// u² - λ = 0.
pub fn scalar_fold() -> Problem {
    let mut p = scalar("scalar_fold", |l, u| u * u - l, |_, u| 2.0 * u, |_, _| -1.0, false);
    p.spec = Some(ProblemSpec::ScalarFold);
    p
}

/// u - λ b = 0.
pub fn scalar_linear(b: f64) -> Problem {
    let model = FnModel {
        residual: Box::new(move |l, u| DVector::from_element(1, u[0] - l * b)),
        jac_u: Box::new(|_, _| DMatrix::from_element(1, 1, 1.0)),
        jac_lambda: Box::new(move |_, _| DVector::from_element(1, -b)),
    };
    let mut p = Problem::new("scalar_linear", Grid::algebraic(1), (Bc::Dirichlet, Bc::Dirichlet), Arc::new(model), b == 0.0);
    p.lambda_degree = Some(0);
    p.spec = Some(ProblemSpec::ScalarLinear { b });
    p
}

/// Central finite-difference Jacobian of the residual.
pub fn fd_jacobian(p: &Problem, lambda: f64, u: &DVector<f64>, eps: f64) -> (DMatrix<f64>, DVector<f64>) {
    let n = p.n();
    let mut j = DMatrix::zeros(n, n);
    for k in 0..n {
        let mut up = u.clone();
        let mut um = u.clone();
        up[k] += eps;
        um[k] -= eps;
        let col = (p.residual(lambda, &up) - p.residual(lambda, &um)) / (2.0 * eps);
        j.set_column(k, &col);
    }
    let jl = (p.residual(lambda + eps, u) - p.residual(lambda - eps, u)) / (2.0 * eps);
    (j, jl)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_trivial_branch() {
        let p = make_degenerate_1d(60).unwrap();
        for l in [-1.0, 0.0, 1.0] {
            assert_eq!(p.residual(l, &p.zero_state()).amax(), 0.0);
        }
        assert!(make_degenerate_1d(10).is_err());
    }

    #[test]
    fn matched_stencil_has_sine_kernel() {
        let p = make_degenerate_1d(80).unwrap();
        let s = DVector::from_iterator(80, p.grid.x.iter().map(|x| x.sin()));
        let r = p.jac_u(0.0, &p.zero_state()) * &s;
        assert!(r.amax() < 1e-10);
    }

    #[test]
    fn jacobians_match_fd() {
        let probs = vec![
            make_degenerate_1d(50).unwrap(),
            make_semilinear(30, Coef::Sin { amp: 1.0, freq: 2.0, phase: 0.3 }, 3).unwrap(),
            make_quartic(30, Coef::constant(1.0), Coef::Poly { coeffs: vec![1.0, 0.5] }, -1.0).unwrap(),
            make_meancurvature_1d(25, Coef::Cos { amp: 1.0, freq: 6.0, phase: 0.0 }).unwrap(),
        ];
        for p in probs {
            let u = DVector::from_iterator(p.n(), p.grid.x.iter().map(|x| 0.3 * (2.0 * x).sin() + 0.1 * x));
            let (jfd, lfd) = fd_jacobian(&p, 0.7, &u, 1e-6);
            let j = p.jac_u(0.7, &u);
            let scale = 1.0 + crate::linalg::norm_inf(&j);
            assert!((&j - jfd).amax() <= 1e-5 * scale, "{}", p.name);
            assert!((p.jac_lambda(0.7, &u) - lfd).amax() <= 1e-5 * scale, "{}", p.name);
        }
    }

    #[test]
    fn constants_solve_meancurvature_at_zero() {
        let p = make_meancurvature_1d(21, Coef::Piecewise { breaks: vec![0.5], values: vec![1.0, -2.0] }).unwrap();
        assert!(p.warnings.is_empty());
        let u = DVector::from_element(21, 0.8);
        assert!(p.residual(0.0, &u).amax() < 1e-14);
        let q = make_meancurvature_1d(21, Coef::constant(1.0)).unwrap();
        assert_eq!(q.warnings.len(), 1);
    }

    #[test]
    fn meancurvature_linearization_is_neumann_laplacian() {
        let n = 21;
        let p = make_meancurvature_1d(n, Coef::constant(-1.0)).unwrap();
        let j = p.jac_u(0.5, &p.zero_state());
        let h2 = p.grid.h * p.grid.h;
        for i in 1..n - 1 {
            assert!((j[(i, i)] - (-2.0 / h2 - 0.5)).abs() < 1e-9);
            assert!((j[(i, i + 1)] - 1.0 / h2).abs() < 1e-9);
        }
        assert!((j[(0, 1)] - 2.0 / h2).abs() < 1e-9);
    }

    #[test]
    fn coefficient_table() {
        let c = Coef::Sum {
            terms: vec![
                Coef::Poly { coeffs: vec![1.0, 2.0] },
                Coef::Piecewise { breaks: vec![1.0], values: vec![0.0, 5.0] },
            ],
        };
        assert_eq!(c.eval(0.5), 2.0);
        assert_eq!(c.eval(2.0), 10.0);
        assert!(Coef::Piecewise { breaks: vec![1.0], values: vec![1.0] }.validate().is_err());
        let js = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<Coef>(&js).unwrap(), c);
    }

    #[test]
    fn quartic_rejects_nonpositive_weights() {
        assert!(make_quartic(20, Coef::constant(-1.0), Coef::constant(1.0), 1.0).is_err());
        assert!(make_quartic(20, Coef::constant(1.0), Coef::constant(1.0), 2.0).is_err());
    }
}
