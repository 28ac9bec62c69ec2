//! Numerical Lyapunov–Schmidt reduction at a point with a one-dimensional kernel.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{nearest_eigenpair, norm_inf, sorted_svd, vec_norm_inf, Lu};
use crate::localform::{self, factor_trivial, LocalReport, Series2, DEFAULT_PROBES};
use crate::matcurve::{self, cr_transversality, CurveOptions, EigenBranchOptions};
use crate::problems::Problem;

/// Relative singular-value threshold for the rank test.
pub const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionFrame {
    pub lambda0: f64,
    pub u0: DVector<f64>,
    /// Kernel vector, unit in the weighted L² norm, positive weighted mean.
    pub phi0: DVector<f64>,
    /// Euclidean unit left-kernel vector.
    pub psi0: DVector<f64>,
    /// W⁻¹ψ0 scaled to weighted unit norm; G(λ,z) = ⟨F, psi_tilde⟩_W.
    pub psi_tilde: DVector<f64>,
    pub weights: DVector<f64>,
    /// ⟨phi0, psi_tilde⟩_W.
    pub pairing: f64,
    /// Two smallest singular values, largest singular value.
    pub sigma_min: f64,
    pub sigma_next: f64,
    pub sigma_max: f64,
    pub jac_norm: f64,
}

impl ReductionFrame {
    pub fn inner(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        a.iter().zip(b.iter()).zip(self.weights.iter()).map(|((x, y), w)| x * y * w).sum()
    }

    /// z coordinate of a state: ⟨u - u0, phi0⟩_W.
    pub fn z_of(&self, u: &DVector<f64>) -> f64 {
        self.inner(&(u - &self.u0), &self.phi0)
    }
}

/// Kernel data of J from its SVD, scaled with the weights `w`.
pub fn kernel_frame(j: &DMatrix<f64>, w: &[f64]) -> Result<ReductionFrame> {
    let n = j.nrows();
    if j.ncols() != n || w.len() != n {
        return Err(Error::DimensionMismatch(format!("J is {}x{}, weights {}", n, j.ncols(), w.len())));
    }
    let svd = sorted_svd(j);
    let smax = svd.sigma[0].max(1e-300);
    let deficiency = svd.sigma.iter().filter(|&&s| s <= RANK_TOL * smax).count();
    let smin = svd.sigma[n - 1];
    if deficiency == 0 {
        return Err(Error::NotSingular(smin / smax));
    }
    if deficiency >= 2 {
        return Err(Error::MultiDimensionalKernel(deficiency));
    }
    let wv = DVector::from_column_slice(w);
    let winner = |a: &DVector<f64>, b: &DVector<f64>| -> f64 { a.iter().zip(b.iter()).zip(w.iter()).map(|((x, y), q)| x * y * q).sum() };
    let mut phi = svd.v.column(n - 1).into_owned();
    phi /= winner(&phi, &phi).sqrt();
    let mean: f64 = phi.iter().zip(w.iter()).map(|(p, q)| p * q).sum();
    let flip = if mean.abs() > 1e-8 * vec_norm_inf(&phi) {
        mean < 0.0
    } else {
        phi.iter().find(|p| p.abs() > 1e-3 * vec_norm_inf(&phi)).map(|p| *p < 0.0).unwrap_or(false)
    };
    if flip {
        phi = -phi;
    }
    let psi = svd.u.column(n - 1).into_owned();
    let mut pt = psi.component_div(&wv);
    pt /= winner(&pt, &pt).sqrt();
    let mut pairing = winner(&phi, &pt);
    if pairing < 0.0 {
        pt = -pt;
        pairing = -pairing;
    }
    let psi0 = if psi.dot(&pt) < 0.0 { -psi } else { psi };
    Ok(ReductionFrame {
        lambda0: 0.0,
        u0: DVector::zeros(n),
        phi0: phi,
        psi0,
        psi_tilde: pt,
        weights: wv,
        pairing,
        sigma_min: smin,
        sigma_next: if n >= 2 { svd.sigma[n - 2] } else { f64::INFINITY },
        sigma_max: smax,
        jac_norm: norm_inf(j),
    })
}

/// Frame of D_uF at (λ0, u0).
pub fn kernel_frame_at(problem: &Problem, lambda0: f64, u0: &DVector<f64>) -> Result<ReductionFrame> {
    let j = problem.jac_u(lambda0, u0);
    let mut f = kernel_frame(&j, problem.weights())?;
    f.lambda0 = lambda0;
    f.u0 = u0.clone();
    Ok(f)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ComplementOptions {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for ComplementOptions {
    fn default() -> Self {
        ComplementOptions { tol: 1e-11, max_iters: 30 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplementSolution {
    pub y: DVector<f64>,
    /// G(λ, z).
    pub g: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Newton on F(λ, u0 + z φ0 + Y) = α ψ̃ with ⟨Y, φ0⟩_W = 0 via the bordered system.
pub fn solve_complement(
    problem: &Problem,
    frame: &ReductionFrame,
    lambda: f64,
    z: f64,
    warm: Option<(&DVector<f64>, f64)>,
    opts: &ComplementOptions,
) -> Result<ComplementSolution> {
    let n = frame.phi0.len();
    let (mut y, mut alpha) = match warm {
        Some((y, a)) => (y.clone(), a),
        None => (DVector::zeros(n), 0.0),
    };
    let wphi = frame.phi0.component_mul(&frame.weights);
    let base = &frame.u0 + &frame.phi0 * z;
    let mut residual = f64::INFINITY;
    for it in 0..=opts.max_iters {
        let u = &base + &y;
        let f = problem.residual(lambda, &u);
        let r1 = &f - &frame.psi_tilde * alpha;
        let r2 = wphi.dot(&y);
        let j = problem.jac_u(lambda, &u);
        let scale = 1.0 + norm_inf(&j) * vec_norm_inf(&u);
        residual = vec_norm_inf(&r1);
        let done = residual <= 1e-3 * opts.tol * scale && r2.abs() <= 1e-15 * (1.0 + vec_norm_inf(&y));
        if done || it == opts.max_iters {
            if residual <= opts.tol * scale {
                return Ok(ComplementSolution { y, g: alpha, residual, iterations: it });
            }
            break;
        }
        let mut m = DMatrix::zeros(n + 1, n + 1);
        m.view_mut((0, 0), (n, n)).copy_from(&j);
        for i in 0..n {
            m[(i, n)] = -frame.psi_tilde[i];
            m[(n, i)] = wphi[i];
        }
        let mut rhs = DVector::zeros(n + 1);
        rhs.rows_mut(0, n).copy_from(&(-&r1));
        rhs[n] = -r2;
        let d = Lu::new(&m).solve(&rhs)?;
        let dy = d.rows(0, n).into_owned();
        let da = d[n];
        y += &dy;
        alpha += da;
        if !y.iter().all(|v| v.is_finite()) {
            break;
        }
        let small = vec_norm_inf(&dy) <= 1e-15 * (1.0 + vec_norm_inf(&u)) && da.abs() <= 1e-17 * (1.0 + alpha.abs());
        if small {
            let u = &base + &y;
            let f = problem.residual(lambda, &u);
            let r1 = &f - &frame.psi_tilde * alpha;
            let scale = 1.0 + norm_inf(&problem.jac_u(lambda, &u)) * vec_norm_inf(&u);
            residual = vec_norm_inf(&r1);
            if residual <= opts.tol * scale {
                return Ok(ComplementSolution { y, g: alpha, residual, iterations: it + 1 });
            }
            break;
        }
    }
    Err(Error::ComplementNoConvergence { lambda, z, residual })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeBox {
    pub lambda_half: f64,
    pub z_half: f64,
    /// Chebyshev nodes per axis on the training grid.
    pub nodes: usize,
    /// Total order of the fitted polynomial.
    pub order: usize,
}

impl Default for ProbeBox {
    fn default() -> Self {
        ProbeBox { lambda_half: 0.1, z_half: 0.05, nodes: 9, order: 6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedSamples {
    pub grid: Vec<(f64, f64)>,
    pub values: Vec<f64>,
    pub newton_residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedFit {
    pub series: Series2,
    pub samples: ReducedSamples,
    pub train_rms: f64,
    pub heldout_rms: f64,
}

fn cheb(count: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..count).map(|k| (PI * (2 * k + 1) as f64 / (2 * count) as f64).cos()).collect();
    // exact zero for the middle node of odd grids
    if count % 2 == 1 {
        v[count / 2] = 0.0;
    }
    v
}

fn sample_grid(
    problem: &Problem,
    frame: &ReductionFrame,
    bx: &ProbeBox,
    count: usize,
    opts: &ComplementOptions,
) -> Result<ReducedSamples> {
    let lt = cheb(count);
    let zt = cheb(count);
    let mut out = ReducedSamples { grid: vec![], values: vec![], newton_residuals: vec![] };
    // march outward from the smallest |z| so each solve starts from a neighbour
    let mut order: Vec<usize> = (0..count).collect();
    order.sort_by(|a, b| zt[*a].abs().partial_cmp(&zt[*b].abs()).unwrap());
    for &tl in &lt {
        let lambda = frame.lambda0 + bx.lambda_half * tl;
        let mut warm_pos: Option<(DVector<f64>, f64)> = None;
        let mut warm_neg: Option<(DVector<f64>, f64)> = None;
        for &k in &order {
            let z = bx.z_half * zt[k];
            let slot = if z >= 0.0 { &mut warm_pos } else { &mut warm_neg };
            let start = slot.as_ref().map(|(y, a)| (y, *a));
            let sol = solve_complement(problem, frame, lambda, z, start, opts)?;
            out.grid.push((lambda, z));
            out.values.push(sol.g);
            out.newton_residuals.push(sol.residual);
            let keep = (sol.y.clone(), sol.g);
            if z == 0.0 {
                warm_pos = Some(keep.clone());
                warm_neg = Some(keep);
            } else if z > 0.0 {
                warm_pos = Some(keep);
            } else {
                warm_neg = Some(keep);
            }
        }
    }
    Ok(out)
}

fn basis_pairs(order: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for total in 0..=order {
        for i in 0..=total {
            v.push((i, total - i));
        }
    }
    v
}

/// Least-squares fit of G on a tensor Chebyshev grid of the probe box.
pub fn reduced_series(problem: &Problem, frame: &ReductionFrame, bx: &ProbeBox) -> Result<ReducedFit> {
    let opts = ComplementOptions::default();
    let train = sample_grid(problem, frame, bx, bx.nodes, &opts)?;
    let held = sample_grid(problem, frame, bx, bx.nodes.saturating_sub(1).max(2), &opts)?;
    let pairs = basis_pairs(bx.order);
    let scaled = |(l, z): (f64, f64)| ((l - frame.lambda0) / bx.lambda_half, z / bx.z_half);
    let design = |s: &ReducedSamples| {
        DMatrix::from_fn(s.grid.len(), pairs.len(), |r, c| {
            let (x, y) = scaled(s.grid[r]);
            x.powi(pairs[c].0 as i32) * y.powi(pairs[c].1 as i32)
        })
    };
    let a = design(&train);
    let b = DVector::from_column_slice(&train.values);
    let sol = a.clone().svd(true, true).solve(&b, 1e-14).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let rms = |r: DVector<f64>| (r.norm_squared() / r.len() as f64).sqrt();
    let train_rms = rms(&a * &sol - &b);
    let ah = design(&held);
    let bh = DVector::from_column_slice(&held.values);
    let heldout_rms = rms(&ah * &sol - &bh);
    let gmax = train.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = 1e-14 * gmax;
    if heldout_rms > 10.0 * train_rms.max(floor) {
        return Err(Error::FitUnstable { heldout: heldout_rms, noise: train_rms.max(floor) });
    }
    let noise = train_rms.max(heldout_rms).max(floor);
    let values = pairs.iter().enumerate().map(|(c, &(i, j))| {
        ((i, j), sol[c] / (bx.lambda_half.powi(i as i32) * bx.z_half.powi(j as i32)))
    });
    let series = Series2::new(bx.order, (frame.lambda0, 0.0), values, noise, (bx.lambda_half, bx.z_half));
    Ok(ReducedFit { series, samples: train, train_rms, heldout_rms })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalOptions {
    pub probe_box: ProbeBox,
    pub probes: Vec<f64>,
    pub curve: CurveOptions,
    pub eigen: EigenBranchOptions,
    /// Move λ0 onto the nearest eigenvalue of the trivial-branch linearization.
    pub refine_lambda: bool,
}

impl Default for LocalOptions {
    fn default() -> Self {
        LocalOptions {
            probe_box: ProbeBox::default(),
            probes: DEFAULT_PROBES.to_vec(),
            curve: CurveOptions::default(),
            eigen: EigenBranchOptions::default(),
            refine_lambda: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalAnalysis {
    pub lambda0: f64,
    pub requested_lambda0: f64,
    pub chi: usize,
    pub chi_det: usize,
    pub chi_mu: usize,
    pub mu: Vec<f64>,
    /// g_{χ,0} / (pairing · μ_χ); 1 at leading order.
    pub c0_ratio: f64,
    pub transversal: Option<bool>,
    pub pairing: f64,
    pub sigma_min: f64,
    pub sigma_next: f64,
    pub big_g: Series2,
    pub g: Series2,
    pub train_rms: f64,
    pub heldout_rms: f64,
    pub report: LocalReport,
    #[serde(skip)]
    pub frame: Option<ReductionFrame>,
}

fn is_zero_state(u: &DVector<f64>) -> bool {
    u.iter().all(|v| *v == 0.0)
}

/// Secant iteration on the eigenvalue of D_uF(λ, u0) nearest zero.
fn refine_eigenvalue(problem: &Problem, lambda0: f64, u0: &DVector<f64>) -> f64 {
    let mu = |l: f64| nearest_eigenpair(&problem.jac_u(l, u0), 0.0, None, 1e-13, 300).map(|p| p.0);
    let j0 = problem.jac_u(lambda0, u0);
    let scale = norm_inf(&j0).max(1.0);
    let m0 = match mu(lambda0) {
        Ok(m) => m,
        Err(_) => return lambda0,
    };
    if m0.abs() <= 1e-12 * scale {
        return lambda0;
    }
    let (mut a, mut fa) = (lambda0, m0);
    let mut b = lambda0 + 1e-4;
    let mut fb = match mu(b) {
        Ok(m) => m,
        Err(_) => return lambda0,
    };
    for _ in 0..40 {
        if fb == fa {
            break;
        }
        let c = b - fb * (b - a) / (fb - fa);
        if !c.is_finite() || (c - lambda0).abs() > 0.05 {
            return lambda0;
        }
        a = b;
        fa = fb;
        b = c;
        fb = match mu(b) {
            Ok(m) => m,
            Err(_) => return lambda0,
        };
        if fb.abs() <= 1e-13 * scale || (b - a).abs() <= 1e-15 * (1.0 + b.abs()) {
            return b;
        }
    }
    if fb.abs() < m0.abs() {
        b
    } else {
        lambda0
    }
}

/// Kernel frame, reduced series and local zero-set analysis at (λ0, u0).
pub fn local_analysis(problem: &Problem, lambda0: f64, u0: &DVector<f64>) -> Result<LocalAnalysis> {
    local_analysis_with(problem, lambda0, u0, &LocalOptions::default())
}

pub fn local_analysis_with(problem: &Problem, lambda0: f64, u0: &DVector<f64>, opts: &LocalOptions) -> Result<LocalAnalysis> {
    let bx = opts.probe_box;
    let lam = if opts.refine_lambda && problem.trivial_branch && is_zero_state(u0) {
        refine_eigenvalue(problem, lambda0, u0)
    } else {
        lambda0
    };
    let frame = kernel_frame_at(problem, lam, u0)?;
    // the reduced map must vanish along z = 0
    for tl in [-1.0, 0.0, 1.0] {
        let l = lam + tl * bx.lambda_half;
        let r = vec_norm_inf(&problem.residual(l, u0));
        let scale = 1.0 + frame.jac_norm * vec_norm_inf(u0);
        if r > 1e-11 * scale {
            return Err(Error::NotOnTrivialBranch(r));
        }
    }
    let fit = reduced_series(problem, &frame, &bx)?;
    let g = factor_trivial(&fit.series)?;
    let report = localform::analyze(&g, bx.lambda_half, bx.z_half, &opts.probes)?;
    let chi = report.chi;

    let curve = problem.linearization_curve_at(u0);
    let chi_det = matcurve::chi_with(&curve, lam, &opts.curve)?;
    let order = (chi + 2).max(3);
    let mu = matcurve::perturbed_eigenvalue_with(&curve, lam, order, &opts.eigen)?;
    let r = opts.eigen.radius;
    let sizes: Vec<f64> = mu.iter().enumerate().map(|(k, m)| m.abs() * r.powi(k as i32)).collect();
    let smax = sizes.iter().cloned().fold(0.0, f64::max);
    let chi_mu = sizes.iter().position(|s| *s > 1e-6 * smax).unwrap_or(mu.len());
    if chi != chi_det || chi != chi_mu {
        return Err(Error::InconsistentMultiplicity { series: chi, det: chi_det, mu: chi_mu });
    }
    let c0_ratio = g.get(chi, 0) / (frame.pairing * mu[chi]);

    let d = 1e-5;
    let l1 = (problem.jac_u(lam + d, u0) - problem.jac_u(lam - d, u0)) / (2.0 * d);
    let tr = cr_transversality(&problem.jac_u(lam, u0), &l1);

    Ok(LocalAnalysis {
        lambda0: lam,
        requested_lambda0: lambda0,
        chi,
        chi_det,
        chi_mu,
        mu,
        c0_ratio,
        transversal: tr.transversal,
        pairing: frame.pairing,
        sigma_min: frame.sigma_min,
        sigma_next: frame.sigma_next,
        big_g: fit.series,
        g,
        train_rms: fit.train_rms,
        heldout_rms: fit.heldout_rms,
        report,
        frame: Some(frame),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{FnModel, Grid, Bc};
    use std::sync::Arc;

    #[test]
    fn frame_of_diag() {
        let j = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0, 2.0]));
        let f = kernel_frame(&j, &[1.0, 1.0, 1.0]).unwrap();
        assert!((f.phi0[0] - 1.0).abs() < 1e-14 && f.phi0[1].abs() < 1e-14);
        assert!((f.psi0[0].abs() - 1.0).abs() < 1e-14);
        let j = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 0.0, 1.0]));
        assert!(matches!(kernel_frame(&j, &[1.0; 3]), Err(Error::MultiDimensionalKernel(2))));
        assert!(matches!(kernel_frame(&DMatrix::identity(3, 3), &[1.0; 3]), Err(Error::NotSingular(_))));
    }

    fn diag_linear() -> Problem {
        // F = diag(λ, 1) u
        let model = FnModel {
            residual: Box::new(|l, u| DVector::from_vec(vec![l * u[0], u[1]])),
            jac_u: Box::new(|l, _| DMatrix::from_diagonal(&DVector::from_vec(vec![l, 1.0]))),
            jac_lambda: Box::new(|_, u| DVector::from_vec(vec![u[0], 0.0])),
        };
        Problem::new("diag", Grid::algebraic(2), (Bc::Dirichlet, Bc::Dirichlet), Arc::new(model), true)
    }

    #[test]
    fn linear_reduction_is_lambda_z() {
        let p = diag_linear();
        let frame = kernel_frame_at(&p, 0.0, &DVector::zeros(2)).unwrap();
        let fit = reduced_series(&p, &frame, &ProbeBox::default()).unwrap();
        assert!((fit.series.get(1, 1) - 1.0).abs() < 1e-10);
        for t in fit.series.terms.iter().filter(|t| (t.i, t.j) != (1, 1)) {
            assert!(t.negligible, "{t:?}");
        }
        let s = solve_complement(&p, &frame, 0.05, 0.0, None, &ComplementOptions::default()).unwrap();
        assert_eq!(s.y.amax(), 0.0);
    }

    #[test]
    fn quadratic_toy_matches_hand_reduction() {
        // F1 = λx + x y, F2 = y - x²; Y = z² e2, G = λz + z³
        let model = FnModel {
            residual: Box::new(|l, u| DVector::from_vec(vec![l * u[0] + u[0] * u[1], u[1] - u[0] * u[0]])),
            jac_u: Box::new(|l, u| DMatrix::from_row_slice(2, 2, &[l + u[1], u[0], -2.0 * u[0], 1.0])),
            jac_lambda: Box::new(|_, u| DVector::from_vec(vec![u[0], 0.0])),
        };
        let p = Problem::new("toy", Grid::algebraic(2), (Bc::Dirichlet, Bc::Dirichlet), Arc::new(model), true);
        let frame = kernel_frame_at(&p, 0.0, &DVector::zeros(2)).unwrap();
        let fit = reduced_series(&p, &frame, &ProbeBox::default()).unwrap();
        assert!((fit.series.get(1, 1) - 1.0).abs() < 1e-6);
        assert!((fit.series.get(0, 3) - 1.0).abs() < 1e-6);
        let la = local_analysis(&p, 0.0, &DVector::zeros(2)).unwrap();
        assert_eq!(la.chi, 1);
        assert_eq!(la.report.half_branch_count, 4);
    }

    #[test]
    fn regular_point_rejected() {
        let p = diag_linear();
        assert!(matches!(local_analysis(&p, 0.5, &DVector::zeros(2)), Err(Error::NotSingular(_))));
    }
}
