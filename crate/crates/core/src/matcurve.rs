//! Matrix curves λ ↦ 𝔏(λ): determinant polynomials, algebraic multiplicity,
//! generalized spectrum, parity and the perturbed eigenvalue.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{nearest_eigenpair, norm_inf, numerical_rank, sorted_svd, Lu};
use crate::polyalg::{count_real_roots_tol, isolate_roots_tol, Poly, DROP_TOL};

pub type Evaluator = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;

#[derive(Clone)]
pub struct MatrixCurve {
    dim: usize,
    center: f64,
    taylor: Option<Vec<DMatrix<f64>>>,
    /// Known polynomial degree of the entries in λ.
    degree: Option<usize>,
    eval: Evaluator,
}

impl fmt::Debug for MatrixCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MatrixCurve")
            .field("dim", &self.dim)
            .field("center", &self.center)
            .field("taylor_terms", &self.taylor.as_ref().map(|t| t.len()))
            .finish()
    }
}

impl MatrixCurve {
    pub fn from_fn<F>(dim: usize, f: F) -> MatrixCurve
    where
        F: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        MatrixCurve { dim, center: 0.0, taylor: None, degree: None, eval: Arc::new(f) }
    }

    /// Σ_j coeffs[j] (λ - center)^j.
    pub fn from_taylor(center: f64, coeffs: Vec<DMatrix<f64>>) -> Result<MatrixCurve> {
        let dim = coeffs.first().map(|m| m.nrows()).unwrap_or(0);
        if coeffs.is_empty() || coeffs.iter().any(|m| m.nrows() != dim || m.ncols() != dim) {
            return Err(Error::DimensionMismatch("Taylor coefficients must be square and equal-sized".into()));
        }
        let c = coeffs.clone();
        let eval = move |l: f64| {
            let t = l - center;
            let mut acc = c.last().unwrap().clone();
            for m in c.iter().rev().skip(1) {
                acc = acc * t + m;
            }
            acc
        };
        let degree = Some(coeffs.len() - 1);
        Ok(MatrixCurve { dim, center, taylor: Some(coeffs), degree, eval: Arc::new(eval) })
    }

    /// a + λ b.
    pub fn linear(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<MatrixCurve> {
        MatrixCurve::from_taylor(0.0, vec![a, b])
    }

    pub fn product(&self, other: &MatrixCurve) -> Result<MatrixCurve> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch(format!("{} vs {}", self.dim, other.dim)));
        }
        let (a, b) = (self.eval.clone(), other.eval.clone());
        let mut c = MatrixCurve::from_fn(self.dim, move |l| a(l) * b(l));
        c.degree = self.degree.zip(other.degree).map(|(p, q)| p + q);
        Ok(c)
    }

    /// Declares the entries to be polynomials of degree at most `d` in λ.
    pub fn with_degree(mut self, d: usize) -> MatrixCurve {
        self.degree = Some(d);
        self
    }

    pub fn degree(&self) -> Option<usize> {
        self.degree
    }

    /// Upper bound for deg det 𝔏, or dim + 4 when the entry degree is unknown.
    pub fn det_degree_bound(&self) -> usize {
        match self.degree {
            Some(d) => (self.dim * d).max(1),
            None => self.dim + 4,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn taylor(&self) -> Option<&[DMatrix<f64>]> {
        self.taylor.as_deref()
    }

    pub fn eval(&self, lambda: f64) -> DMatrix<f64> {
        (self.eval)(lambda)
    }
}

// Chebyshev helpers on [-1, 1].

fn cheb_nodes(count: usize) -> Vec<f64> {
    (0..count)
        .map(|k| (PI * (2 * k + 1) as f64 / (2 * count) as f64).cos())
        .collect()
}

fn cheb_coeffs(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|j| {
            let s: f64 = values
                .iter()
                .enumerate()
                .map(|(k, v)| v * (PI * j as f64 * (2 * k + 1) as f64 / (2 * n) as f64).cos())
                .sum();
            let c = 2.0 * s / n as f64;
            if j == 0 {
                0.5 * c
            } else {
                c
            }
        })
        .collect()
}

fn clenshaw(c: &[f64], t: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &ck in c.iter().skip(1).rev() {
        let b0 = 2.0 * t * b1 - b2 + ck;
        b2 = b1;
        b1 = b0;
    }
    t * b1 - b2 + c.first().copied().unwrap_or(0.0)
}

fn cheb_to_monomial(c: &[f64]) -> Vec<f64> {
    let n = c.len();
    let mut out = vec![0.0; n];
    if n == 0 {
        return out;
    }
    let mut tkm1 = vec![1.0];
    let mut tk = vec![0.0, 1.0];
    out[0] += c[0];
    if n > 1 {
        out[1] += c[1];
    }
    for ck in c.iter().skip(2) {
        let mut next = vec![0.0; tk.len() + 1];
        for (i, v) in tk.iter().enumerate() {
            next[i + 1] += 2.0 * v;
        }
        for (i, v) in tkm1.iter().enumerate() {
            next[i] -= v;
        }
        for (i, v) in next.iter().enumerate() {
            out[i] += ck * v;
        }
        tkm1 = tk;
        tk = next;
    }
    out
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveOptions {
    /// Degree cap for the determinant interpolant; `None` means dim + 4.
    pub degree_cap: Option<usize>,
    /// Relative held-out residual accepted by the interpolant.
    pub heldout_tol: f64,
    /// A Taylor coefficient is zero if |c_k| ≤ zero_rel · max|c_j|.
    pub zero_rel: f64,
    /// Zeros within cluster · window of λ0 count towards χ at λ0.
    #[serde(default = "default_cluster")]
    pub cluster: f64,
    /// Half-width of the window used by `chi`.
    pub window: f64,
    /// Width of isolating intervals for spectrum roots (in λ).
    pub isolation: f64,
}

impl Default for CurveOptions {
    fn default() -> Self {
        CurveOptions { degree_cap: None, heldout_tol: 1e-9, zero_rel: 1e-8, cluster: 1e-3, window: 1.0, isolation: 1e-10 }
    }
}

/// Interpolant of det 𝔏 on [a,b], stored in the variable t ∈ [-1,1].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetPoly {
    pub a: f64,
    pub b: f64,
    /// Chebyshev coefficients of det / exp(log_scale).
    pub cheb: Vec<f64>,
    /// The same interpolant in the monomial basis of t.
    pub poly_t: Poly,
    pub log_scale: f64,
    /// Relative held-out residual of the accepted interpolant.
    pub noise: f64,
    pub degree: usize,
}

impl DetPoly {
    pub fn t_of(&self, lambda: f64) -> f64 {
        (2.0 * lambda - (self.a + self.b)) / (self.b - self.a)
    }

    pub fn lambda_of(&self, t: f64) -> f64 {
        0.5 * (self.a + self.b) + 0.5 * (self.b - self.a) * t
    }

    /// det(𝔏(λ)) / exp(log_scale).
    pub fn eval_scaled(&self, lambda: f64) -> f64 {
        clenshaw(&self.cheb, self.t_of(lambda))
    }

    pub fn eval(&self, lambda: f64) -> f64 {
        self.eval_scaled(lambda) * self.log_scale.exp()
    }

    pub fn is_zero(&self) -> bool {
        self.poly_t.is_zero()
    }

    /// The determinant as a polynomial in λ. Only sensible for small curves.
    pub fn lambda_poly(&self) -> Poly {
        let alpha = 2.0 / (self.b - self.a);
        let beta = -(self.a + self.b) / (self.b - self.a);
        let t = Poly::new(vec![beta, alpha]);
        let mut acc = Poly::zero();
        for &c in self.poly_t.coeffs.iter().rev() {
            acc = acc.mul(&t).add(&Poly::constant(c));
        }
        let p = acc.scale(self.log_scale.exp());
        let m = p.max_abs();
        Poly::new(p.coeffs.into_iter().map(|c| if c.abs() <= 1e-13 * m { 0.0 } else { c }).collect())
    }
}

fn scaled_dets(curve: &MatrixCurve, lambdas: &[f64]) -> Vec<(f64, f64)> {
    lambdas
        .iter()
        .map(|&l| {
            let d = Lu::new(&curve.eval(l)).det();
            (d.sign, d.log_abs)
        })
        .collect()
}

pub fn det_poly(curve: &MatrixCurve, a: f64, b: f64, degree_cap: Option<usize>) -> Result<DetPoly> {
    let opts = CurveOptions { degree_cap, ..CurveOptions::default() };
    det_poly_with(curve, a, b, &opts)
}

/// Chebyshev interpolation of the determinant with degree doubling up to the cap.
/// Degree bounds up to this are interpolated exactly instead of adaptively.
pub const EXACT_DEGREE_MAX: usize = 32;
/// A held-out residual within this factor of the tolerance that stops shrinking is accepted.
pub const PLATEAU_FACTOR: f64 = 1e3;

pub fn det_poly_with(curve: &MatrixCurve, a: f64, b: f64, opts: &CurveOptions) -> Result<DetPoly> {
    if !(a < b) {
        return Err(Error::InvalidInterval(a, b));
    }
    let cap = opts.degree_cap.unwrap_or(curve.det_degree_bound()).max(1);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    // a small known bound is cheaper to hit exactly than to approach (no aliasing either)
    let known = opts.degree_cap.is_none() && curve.degree().is_some();
    let mut d = if known && cap <= EXACT_DEGREE_MAX { cap } else { cap.min(8) };
    let mut prev_resid: Option<f64> = None;
    loop {
        let nodes = cheb_nodes(d + 1);
        let lams: Vec<f64> = nodes.iter().map(|t| mid + half * t).collect();
        let dets = scaled_dets(curve, &lams);
        let held: Vec<f64> = (1..=d).map(|k| (PI * k as f64 / (d + 1) as f64).cos()).collect();
        let held_l: Vec<f64> = held.iter().map(|t| mid + half * t).collect();
        let held_d = scaled_dets(curve, &held_l);
        let log_scale = dets
            .iter()
            .chain(held_d.iter())
            .filter(|(s, _)| *s != 0.0)
            .map(|(_, l)| *l)
            .fold(f64::NEG_INFINITY, f64::max);
        if log_scale == f64::NEG_INFINITY {
            return Ok(DetPoly { a, b, cheb: vec![], poly_t: Poly::zero(), log_scale: 0.0, noise: 0.0, degree: 0 });
        }
        let val = |(s, l): &(f64, f64)| if *s == 0.0 { 0.0 } else { s * (l - log_scale).exp() };
        let vals: Vec<f64> = dets.iter().map(val).collect();
        let hvals: Vec<f64> = held_d.iter().map(val).collect();
        let mut c = cheb_coeffs(&vals);
        let vmax = vals.iter().chain(hvals.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
        let resid = held
            .iter()
            .zip(hvals.iter())
            .map(|(t, v)| (clenshaw(&c, *t) - v).abs())
            .fold(0.0, f64::max)
            / vmax;
        // at a true degree bound the interpolant is exact and the residual is rounding
        let exact = d >= cap && known;
        // doubling that no longer helps means rounding, not truncation, dominates
        let plateau = prev_resid.is_some_and(|p| resid > 0.5 * p) && resid <= PLATEAU_FACTOR * opts.heldout_tol;
        if resid <= opts.heldout_tol || exact || plateau {
            let noise = resid.max(1e-16 * (d as f64));
            let cmax = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let chop = noise.max(4.0 * f64::EPSILON) * cmax.max(vmax);
            while c.len() > 1 && c.last().unwrap().abs() <= chop {
                c.pop();
            }
            let poly_t = Poly::new(cheb_to_monomial(&c));
            let degree = poly_t.degree().unwrap_or(0);
            return Ok(DetPoly { a, b, cheb: c, poly_t, log_scale, noise, degree });
        }
        if d >= cap {
            return Err(Error::NotPolynomialAtCap { cap, residual: resid });
        }
        prev_resid = Some(resid);
        d = (2 * d).min(cap);
    }
}

fn default_cluster() -> f64 {
    1e-3
}

/// Order of vanishing of det 𝔏 at λ0, counting zeros that rounding may have split off nearby.
pub fn chi(curve: &MatrixCurve, lambda0: f64) -> Result<usize> {
    chi_with(curve, lambda0, &CurveOptions::default())
}

pub fn chi_with(curve: &MatrixCurve, lambda0: f64, opts: &CurveOptions) -> Result<usize> {
    let mut r = opts.window;
    for _ in 0..8 {
        let dp = det_poly_with(curve, lambda0 - r, lambda0 + r, opts)?;
        if dp.is_zero() {
            return Err(Error::DetIdenticallyZero(lambda0));
        }
        let q = dp.poly_t.normalized();
        let tol = gcd_tol(dp.noise);
        let cmax = q.max_abs();
        let k0 = q
            .coeffs
            .iter()
            .position(|c| c.abs() > opts.zero_rel * cmax)
            .unwrap_or(q.coeffs.len());
        // deflate first: rounding spreads a k0-fold zero into a ring of radius ~ noise^(1/k0)
        let rest = Poly::new(q.coeffs[k0.min(q.coeffs.len())..].to_vec());
        // other roots in the window (away from the centre) mean λ0 is not isolated
        let delta = 0.02;
        let others = if rest.degree().unwrap_or(0) > 0 {
            count_real_roots_tol(&rest, -1.0, -delta, tol).unwrap_or(0) + count_real_roots_tol(&rest, delta, 1.0, tol).unwrap_or(0)
        } else {
            0
        };
        if others > 0 {
            r *= 0.25;
            continue;
        }
        // zeros of the remaining factor that sit in the disc |t| ≤ cluster belong to λ0 as well;
        // anything between the disc and the isolation radius is ambiguous
        let roots = if rest.degree().unwrap_or(0) > 0 { rest.complex_roots() } else { vec![] };
        let k1 = roots.iter().filter(|z| z.norm() <= opts.cluster).count();
        if roots.iter().any(|z| z.norm() > opts.cluster && z.norm() < delta) {
            r *= 0.25;
            continue;
        }
        return Ok(k0 + k1);
    }
    Err(Error::NotIsolated(lambda0))
}

fn gcd_tol(noise: f64) -> f64 {
    DROP_TOL.max(100.0 * noise)
}

/// Generalized eigenvalue dimension of K at λ0 from rank stabilization.
pub fn chi_compact(k: &DMatrix<f64>, lambda0: f64) -> usize {
    let n = k.nrows();
    let a = DMatrix::identity(n, n) * lambda0 - k;
    let mut pow = a.clone();
    let mut prev = n;
    for _ in 0..n {
        let r = numerical_rank(&pow, 1e-9);
        if r == prev {
            break;
        }
        prev = r;
        pow = &pow * &a;
    }
    n - prev
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eigen {
    pub lambda: f64,
    pub chi: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub interval: (f64, f64),
    pub eigenvalues: Vec<Eigen>,
    /// Root candidates of the interpolant rejected by the multiplicity test.
    #[serde(default)]
    pub discarded: Vec<f64>,
    pub degree: usize,
    pub noise: f64,
}

impl SpectrumReport {
    pub fn empty(a: f64, b: f64) -> SpectrumReport {
        SpectrumReport { interval: (a, b), eigenvalues: vec![], discarded: vec![], degree: 0, noise: 0.0 }
    }

    pub fn total_chi(&self) -> usize {
        self.eigenvalues.iter().map(|e| e.chi).sum()
    }
}

/// Re-locates a root of det 𝔏 from an interpolant on a window of radius r around it.
fn polish_root(curve: &MatrixCurve, l: f64, r: f64, opts: &CurveOptions) -> f64 {
    let mut cur = l;
    for _ in 0..2 {
        let Ok(dp) = det_poly_with(curve, cur - r, cur + r, opts) else { return cur };
        if dp.is_zero() {
            return cur;
        }
        let q = dp.poly_t.normalized();
        let Ok(iv) = isolate_roots_tol(&q, -1.0, 1.0, opts.isolation / r, gcd_tol(dp.noise)) else { return cur };
        let best = iv.iter().map(|(lo, hi)| 0.5 * (lo + hi)).min_by(|x, y| x.abs().partial_cmp(&y.abs()).unwrap());
        match best {
            Some(t) if t.abs() <= 0.5 => cur = dp.lambda_of(t),
            _ => return cur,
        }
    }
    cur
}

/// Real roots of the interpolant in t, plus the real parts of nearly real complex ones
/// (multiple roots drift off the axis under rounding).
fn candidates(dp: &DetPoly, opts: &CurveOptions) -> Result<Vec<f64>> {
    let half = 0.5 * (dp.b - dp.a);
    let q = dp.poly_t.normalized();
    let iv = isolate_roots_tol(&q, -1.0, 1.0, opts.isolation / half, gcd_tol(dp.noise))?;
    let mut ts: Vec<f64> = iv.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect();
    if q.degree().unwrap_or(0) > 0 {
        for z in q.complex_roots() {
            if z.im.abs() <= opts.cluster && z.re.abs() < 1.0 {
                ts.push(z.re);
            }
        }
    }
    ts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(ts)
}

fn group(sorted: &[f64], tol: f64) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for &r in sorted {
        match out.last_mut() {
            Some(g) if r - g[g.len() - 1] <= tol => g.push(r),
            _ => out.push(vec![r]),
        }
    }
    out
}

fn group_window(groups: &[Vec<f64>], i: usize, cap: f64) -> f64 {
    let mut w = cap;
    if i > 0 {
        w = w.min(0.45 * (groups[i][0] - groups[i - 1].last().unwrap()));
    }
    if i + 1 < groups.len() {
        w = w.min(0.45 * (groups[i + 1][0] - groups[i].last().unwrap()));
    }
    w
}

/// Re-interpolates around a tight group of candidates until it is either one cluster
/// or splits into separated roots, which are then handled one by one.
// chi at l; a window too tight for a clean fit is widened up to `outer`.
fn chi_widening(curve: &MatrixCurve, l: f64, w: f64, outer: f64, opts: &CurveOptions) -> Result<usize> {
    let mut w = w;
    loop {
        match chi_with(curve, l, &CurveOptions { window: w, ..*opts }) {
            Err(Error::NotPolynomialAtCap { .. } | Error::ZeroPolynomial) if w < outer => w = (4.0 * w).min(outer),
            r => return r,
        }
    }
}

fn resolve_group(
    curve: &MatrixCurve,
    members: &[f64],
    (w, outer): (f64, f64),
    opts: &CurveOptions,
    depth: usize,
    out: &mut Vec<(f64, usize)>,
) -> Result<()> {
    let centre = members.iter().sum::<f64>() / members.len() as f64;
    if members.len() == 1 || depth >= 6 {
        let l = if members.len() == 1 { polish_root(curve, centre, w, opts) } else { centre };
        out.push((l, chi_widening(curve, l, w, outer, opts)?));
        return Ok(());
    }
    // a local fit that fails means the members are not separable at this scale
    let fit = det_poly_with(curve, centre - w, centre + w, opts)
        .and_then(|dp| if dp.is_zero() { Err(Error::DetIdenticallyZero(centre)) } else { Ok(dp) })
        .and_then(|dp| candidates(&dp, opts).map(|c| (dp, c)));
    let (dp, cands) = match fit {
        Ok(f) => f,
        Err(Error::DetIdenticallyZero(x)) if depth == 0 => return Err(Error::DetIdenticallyZero(x)),
        Err(_) if depth > 0 => {
            out.push((centre, chi_widening(curve, centre, w, outer, opts)?));
            return Ok(());
        }
        Err(e) => return Err(e),
    };
    let ts: Vec<f64> = cands.into_iter().filter(|t| t.abs() <= 0.5).collect();
    let sub = group(&ts, opts.cluster);
    if sub.len() <= 1 {
        let l = sub.first().map(|g| dp.lambda_of(g.iter().sum::<f64>() / g.len() as f64)).unwrap_or(centre);
        out.push((l, chi_widening(curve, l, w, outer, opts)?));
        return Ok(());
    }
    let sub: Vec<Vec<f64>> = sub.iter().map(|g| g.iter().map(|t| dp.lambda_of(*t)).collect()).collect();
    for (i, g) in sub.iter().enumerate() {
        let wi = group_window(&sub, i, w);
        resolve_group(curve, g, (wi, w), opts, depth + 1, out)?;
    }
    Ok(())
}

pub fn generalized_spectrum(curve: &MatrixCurve, a: f64, b: f64) -> Result<SpectrumReport> {
    generalized_spectrum_with(curve, a, b, &CurveOptions::default())
}

pub fn generalized_spectrum_with(curve: &MatrixCurve, a: f64, b: f64, opts: &CurveOptions) -> Result<SpectrumReport> {
    let dp = det_poly_with(curve, a, b, opts)?;
    if dp.is_zero() {
        return Err(Error::DetIdenticallyZero(0.5 * (a + b)));
    }
    let half = 0.5 * (b - a);
    let roots: Vec<f64> = candidates(&dp, opts)?.into_iter().map(|t| dp.lambda_of(t)).collect();
    let mut found = Vec::new();
    let groups = group(&roots, opts.cluster * half);
    for (i, g) in groups.iter().enumerate() {
        let w = group_window(&groups, i, opts.window);
        resolve_group(curve, g, (w, w), opts, 0, &mut found)?;
    }
    let mut eigenvalues = Vec::new();
    let mut discarded = Vec::new();
    for (l, c) in found {
        if !(l > a && l < b) {
            continue;
        }
        if c == 0 {
            discarded.push(l);
        } else {
            eigenvalues.push(Eigen { lambda: l, chi: c });
        }
    }
    eigenvalues.sort_by(|x, y| x.lambda.partial_cmp(&y.lambda).unwrap());
    Ok(SpectrumReport { interval: (a, b), eigenvalues, discarded, degree: dp.degree, noise: dp.noise })
}

fn is_invertible(m: &DMatrix<f64>) -> bool {
    let lu = Lu::new(m);
    if lu.is_singular() {
        return false;
    }
    let s = lu.smallest_singular_value(30);
    s > 1e-12 * norm_inf(m).max(1e-300)
}

/// (-1)^{Σχ} over the eigenvalues in (a,b).
pub fn parity(curve: &MatrixCurve, a: f64, b: f64) -> Result<i32> {
    parity_with(curve, a, b, &CurveOptions::default())
}

pub fn parity_with(curve: &MatrixCurve, a: f64, b: f64, opts: &CurveOptions) -> Result<i32> {
    if !(a < b) {
        return Err(Error::InvalidInterval(a, b));
    }
    for e in [a, b] {
        if !is_invertible(&curve.eval(e)) {
            return Err(Error::EndpointEigenvalue(e));
        }
    }
    let s = generalized_spectrum_with(curve, a, b, opts)?;
    Ok(if s.total_chi() % 2 == 0 { 1 } else { -1 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransversalityReport {
    pub kernel_dim: usize,
    /// `None` unless the kernel is one-dimensional.
    pub transversal: Option<bool>,
    /// ⟨L1 φ0, ψ0⟩ with unit Euclidean kernel vectors.
    pub pairing: f64,
}

pub fn cr_transversality(l0: &DMatrix<f64>, l1: &DMatrix<f64>) -> TransversalityReport {
    let svd = sorted_svd(l0);
    let smax = svd.sigma.first().copied().unwrap_or(0.0).max(1e-300);
    let kernel_dim = svd.sigma.iter().filter(|&&s| s <= 1e-9 * smax).count();
    if kernel_dim != 1 {
        return TransversalityReport { kernel_dim, transversal: None, pairing: f64::NAN };
    }
    let k = svd.sigma.len() - 1;
    let phi = svd.v.column(k).into_owned();
    let psi = svd.u.column(k).into_owned();
    let pairing = (l1 * &phi).dot(&psi);
    let scale = norm_inf(l1).max(1.0);
    TransversalityReport { kernel_dim, transversal: Some(pairing.abs() > 1e-8 * scale), pairing }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EigenBranchOptions {
    pub radius: f64,
    /// Points on each side of λ0.
    pub half_points: usize,
}

impl Default for EigenBranchOptions {
    fn default() -> Self {
        EigenBranchOptions { radius: 0.2, half_points: 8 }
    }
}

/// Taylor coefficients μ_0..μ_order of the eigenvalue branch through 0 at λ0.
pub fn perturbed_eigenvalue(curve: &MatrixCurve, lambda0: f64, order: usize) -> Result<Vec<f64>> {
    perturbed_eigenvalue_with(curve, lambda0, order, &EigenBranchOptions::default())
}

pub fn perturbed_eigenvalue_with(
    curve: &MatrixCurve,
    lambda0: f64,
    order: usize,
    opts: &EigenBranchOptions,
) -> Result<Vec<f64>> {
    let m = opts.half_points.max(order / 2 + 1);
    let r = opts.radius;
    let (mu0, x0) = nearest_eigenpair(&curve.eval(lambda0), 0.0, None, 1e-13, 300)?;
    let mut samples = vec![(0.0, mu0)];
    for dir in [1.0, -1.0] {
        let (mut mu_prev, mut x_prev) = (mu0, x0.clone());
        let mut mu_prev2 = mu0;
        for k in 1..=m {
            let s = dir * k as f64 / m as f64;
            let pred = if k == 1 { mu_prev } else { 2.0 * mu_prev - mu_prev2 };
            let a = curve.eval(lambda0 + r * s);
            let (mu, x) = nearest_eigenpair(&a, pred, Some(&x_prev), 1e-13, 300)
                .map_err(|_| Error::NonIsolatedBranch(lambda0 + r * s))?;
            if x.dot(&x_prev).abs() < 0.9 {
                return Err(Error::NonIsolatedBranch(lambda0 + r * s));
            }
            samples.push((s, mu));
            mu_prev2 = mu_prev;
            mu_prev = mu;
            x_prev = x;
        }
    }
    let rows = samples.len();
    let v = DMatrix::from_fn(rows, order + 1, |i, j| samples[i].0.powi(j as i32));
    let y = DVector::from_iterator(rows, samples.iter().map(|s| s.1));
    let sol = v
        .svd(true, true)
        .solve(&y, 1e-14)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok((0..=order).map(|j| sol[j] / r.powi(j as i32)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag2(f: fn(f64) -> (f64, f64)) -> MatrixCurve {
        MatrixCurve::from_fn(2, move |l| {
            let (a, b) = f(l);
            DMatrix::from_row_slice(2, 2, &[a, 0.0, 0.0, b])
        })
    }

    #[test]
    fn chebyshev_roundtrip() {
        let vals: Vec<f64> = cheb_nodes(6).iter().map(|t| 1.0 - 2.0 * t + 0.5 * t.powi(3)).collect();
        let c = cheb_coeffs(&vals);
        let m = cheb_to_monomial(&c);
        let want = [1.0, -2.0, 0.0, 0.5, 0.0, 0.0];
        for (a, b) in m.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-13);
        }
        assert!((clenshaw(&c, 0.3) - (1.0 - 0.6 + 0.5 * 0.027)).abs() < 1e-14);
    }

    #[test]
    fn det_of_diag() {
        let dp = det_poly(&diag2(|l| (l, 1.0)), -1.0, 1.0, Some(2)).unwrap();
        let p = dp.lambda_poly();
        assert_eq!(p.degree(), Some(1));
        assert!((p.coeffs[1] - 1.0).abs() < 1e-12 && p.coeffs[0].abs() < 1e-12);
    }

    #[test]
    fn det_of_swap() {
        let c = MatrixCurve::from_fn(2, |l| DMatrix::from_row_slice(2, 2, &[l, 1.0, 1.0, l]));
        let p = det_poly(&c, -2.0, 3.0, None).unwrap().lambda_poly();
        assert_eq!(p.degree(), Some(2));
        assert!((p.coeffs[0] + 1.0).abs() < 1e-12);
        assert!(p.coeffs[1].abs() < 1e-12);
        assert!((p.coeffs[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chi_examples() {
        assert_eq!(chi(&diag2(|l| (l, l * l)), 0.0).unwrap(), 3);
        assert_eq!(chi(&diag2(|l| (l, 1.0)), 0.5).unwrap(), 0);
        // (λ-λ0)Π + I - Π with a rank-one projection
        let v = DVector::from_vec(vec![1.0, 2.0, -1.0]);
        let w = DVector::from_vec(vec![0.5, 0.25, 0.0]);
        let pi = &v * w.transpose() / w.dot(&v);
        let id = DMatrix::identity(3, 3);
        let c = MatrixCurve::from_fn(3, move |l| &pi * (l - 0.7) + &id - &pi);
        assert_eq!(chi(&c, 0.7).unwrap(), 1);
    }

    #[test]
    fn compact_examples() {
        let j = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 0.0, 3.0]);
        assert_eq!(chi_compact(&j, 3.0), 2);
        let k = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 2.0]));
        assert_eq!(chi_compact(&k, 1.0), 2);
        assert_eq!(chi_compact(&k, 5.0), 0);
    }

    #[test]
    fn spectrum_of_diag() {
        let s = generalized_spectrum(&diag2(|l| (l, l - 1.0)), -2.0, 2.0).unwrap();
        assert_eq!(s.eigenvalues.len(), 2);
        assert!(s.eigenvalues[0].lambda.abs() < 1e-9 && s.eigenvalues[0].chi == 1);
        assert!((s.eigenvalues[1].lambda - 1.0).abs() < 1e-9 && s.eigenvalues[1].chi == 1);
    }

    #[test]
    fn parity_examples() {
        assert_eq!(parity(&diag2(|l| (l, 1.0)), -1.0, 1.0).unwrap(), -1);
        assert_eq!(parity(&diag2(|l| (l * l + 1.0, 2.0)), -1.0, 1.0).unwrap(), 1);
        assert!(matches!(parity(&diag2(|l| (l, 1.0)), 0.0, 1.0), Err(Error::EndpointEigenvalue(_))));
    }

    #[test]
    fn transversality_examples() {
        let l0 = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0]));
        let r = cr_transversality(&l0, &DMatrix::identity(2, 2));
        assert_eq!(r.kernel_dim, 1);
        assert_eq!(r.transversal, Some(true));
        let l1 = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(cr_transversality(&l0, &l1).transversal, Some(false));
    }

    #[test]
    fn perturbed_examples() {
        let mu = perturbed_eigenvalue(&diag2(|l| (l - 0.3, 1.0)), 0.3, 2).unwrap();
        assert!(mu[0].abs() < 1e-10 && (mu[1] - 1.0).abs() < 1e-9 && mu[2].abs() < 1e-8);
        let mu = perturbed_eigenvalue(&diag2(|l| (l * l, 1.0)), 0.0, 3).unwrap();
        assert!(mu[0].abs() < 1e-10 && mu[1].abs() < 1e-9 && (mu[2] - 1.0).abs() < 1e-8);
    }
}
