//! Pseudo-arclength continuation, singular-point events, branch switching and monitors.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{vec_norm_inf, Lu};
use crate::localform::BranchKind;
use crate::lsred::{kernel_frame_at, local_analysis_with, LocalAnalysis, LocalOptions, ReductionFrame};
use crate::matcurve::SpectrumReport;
use crate::problems::{Check, Problem};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuationConfig {
    /// Nominal arclength step.
    pub h0: f64,
    pub max_steps: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub u_max: f64,
    pub newton_tol: f64,
    pub newton_max_iters: usize,
    /// Closure radius in units of h0.
    pub closure_factor: f64,
    pub min_cos: f64,
    /// z offset used by switch_branch.
    pub switch_offset: f64,
    pub detect_events: bool,
    pub track_sv: bool,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        ContinuationConfig {
            h0: 0.05,
            max_steps: 5000,
            lambda_min: -30.0,
            lambda_max: 30.0,
            u_max: 50.0,
            newton_tol: 1e-10,
            newton_max_iters: 12,
            closure_factor: 3.0,
            min_cos: 0.8,
            switch_offset: 1e-3,
            detect_events: true,
            track_sv: true,
        }
    }
}

impl ContinuationConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [self.h0, self.newton_tol, self.closure_factor, self.switch_offset, self.u_max];
        if pos.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument("continuation tolerances and steps must be positive".into()));
        }
        if !(self.lambda_min < self.lambda_max) {
            return Err(Error::InvalidArgument(format!("lambda bounds ({}, {}) not ordered", self.lambda_min, self.lambda_max)));
        }
        if !(self.min_cos > 0.0 && self.min_cos < 1.0) {
            return Err(Error::InvalidArgument("min_cos must lie in (0,1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub lambda: f64,
    pub u: DVector<f64>,
    pub step: f64,
    pub det_sign: i32,
    /// Negative when not tracked.
    pub smallest_sv: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Fold,
    SimpleBifurcation,
    SvDip,
    LoopClosed,
    BoundHit,
    StepFailure,
    MaxSteps,
    GradientSentinel,
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Fold => "fold",
            EventKind::SimpleBifurcation => "simple_bifurcation",
            EventKind::SvDip => "sv_dip",
            EventKind::LoopClosed => "loop_closed",
            EventKind::BoundHit => "bound_hit",
            EventKind::StepFailure => "step_failure",
            EventKind::MaxSteps => "max_steps",
            EventKind::GradientSentinel => "gradient_sentinel",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Index of the point at or just after the event.
    pub index: usize,
    pub kind: EventKind,
    pub lambda: f64,
    pub u_inf: f64,
    /// Whether a kernel rank test confirmed a singular point.
    pub confirmed: Option<bool>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Origin {
    pub lambda: f64,
    pub u_inf: f64,
    /// Index into the local report's branch list when started by switch_branch.
    pub local_branch: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    LoopClosed,
    BoundHit,
    MaxSteps,
    StepFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub points: Vec<Point>,
    pub events: Vec<Event>,
    pub origin: Origin,
    pub termination: Termination,
    /// Local half-branch through which a closed loop re-entered the origin.
    pub reentry_branch: Option<usize>,
    /// Trivial-line λ values touched by the branch.
    pub contacts: Vec<f64>,
}

impl Branch {
    pub fn has_event(&self, kind: EventKind) -> bool {
        self.events.iter().any(|e| e.kind == kind)
    }

    /// "closed_loop" or "unbounded" when the trace decided which global case occurred.
    pub fn alternative(&self) -> &'static str {
        match self.termination {
            Termination::LoopClosed => "closed_loop",
            Termination::BoundHit => "unbounded",
            _ => "undetermined",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub interval: (f64, f64),
    pub eigenvalue: f64,
    pub chi: usize,
    pub a_prev: i32,
    pub a_next: i32,
    pub p: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagram {
    pub branches: Vec<Branch>,
    pub trivial_spectrum: Option<SpectrumReport>,
    pub parity_ledger: Vec<LedgerEntry>,
    /// Σ P(I_n) over each loop's trivial-line contacts, by branch index.
    pub contact_sums: Vec<(usize, i32)>,
}

fn metric(problem: &Problem) -> DVector<f64> {
    let mut m = DVector::from_element(problem.n() + 1, 1.0);
    for (i, w) in problem.weights().iter().enumerate() {
        m[i + 1] = *w;
    }
    m
}

fn mdot(m: &DVector<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.iter().zip(b.iter()).zip(m.iter()).map(|((x, y), w)| x * y * w).sum()
}

fn pack(lambda: f64, u: &DVector<f64>) -> DVector<f64> {
    let mut x = DVector::zeros(u.len() + 1);
    x[0] = lambda;
    x.rows_mut(1, u.len()).copy_from(u);
    x
}

fn unpack(x: &DVector<f64>) -> (f64, DVector<f64>) {
    (x[0], x.rows(1, x.len() - 1).into_owned())
}

/// [D_λF, D_uF] as an n × (n+1) block placed in the first n rows.
fn augmented(problem: &Problem, lambda: f64, u: &DVector<f64>) -> DMatrix<f64> {
    let n = u.len();
    let j = problem.jac_u(lambda, u);
    let fl = problem.jac_lambda(lambda, u);
    let mut a = DMatrix::zeros(n + 1, n + 1);
    a.view_mut((0, 1), (n, n)).copy_from(&j);
    for i in 0..n {
        a[(i, 0)] = fl[i];
    }
    a
}

/// A point carrying the determinant sign and residual at (λ, u).
pub fn point_at(problem: &Problem, lambda: f64, u: &DVector<f64>, track_sv: bool) -> Point {
    let (det_sign, smallest_sv) = det_info(problem, lambda, u, track_sv);
    let residual = vec_norm_inf(&problem.residual(lambda, u));
    Point { lambda, u: u.clone(), step: 0.0, det_sign, smallest_sv, residual }
}

fn det_info(problem: &Problem, lambda: f64, u: &DVector<f64>, sv: bool) -> (i32, f64) {
    let lu = Lu::new(&problem.jac_u(lambda, u));
    let d = lu.det();
    let s = if sv { lu.smallest_singular_value(40) } else { -1.0 };
    (if lu.is_singular() { 0 } else { d.sign as i32 }, s)
}

/// Unit tangent of the solution curve in the metric δλ² + ‖δu‖²_W.
pub fn tangent(problem: &Problem, lambda: f64, u: &DVector<f64>, prev: Option<&DVector<f64>>) -> Result<DVector<f64>> {
    let n = u.len();
    let m = metric(problem);
    let mut a = augmented(problem, lambda, u);
    let t = match prev {
        Some(p) => {
            for k in 0..=n {
                a[(n, k)] = m[k] * p[k];
            }
            let lu = Lu::new(&a);
            if lu.is_singular() || lu.min_pivot() <= 1e-13 {
                return Err(Error::TangentSingular(lambda));
            }
            let mut rhs = DVector::zeros(n + 1);
            rhs[n] = 1.0;
            lu.solve(&rhs)?
        }
        None => {
            // null vector of [F_λ, F_u] M^{-1/2}
            let sq: Vec<f64> = m.iter().map(|v| v.sqrt()).collect();
            let mut b = a.clone();
            for k in 0..=n {
                for i in 0..n {
                    b[(i, k)] /= sq[k];
                }
                b[(n, k)] = 0.0;
            }
            let svd = crate::linalg::sorted_svd(&b);
            let s = &svd.sigma;
            if n >= 1 && s[n - 1] <= 1e-10 * s[0].max(1.0) {
                return Err(Error::TangentSingular(lambda));
            }
            let v = svd.v.column(n).into_owned();
            DVector::from_iterator(n + 1, v.iter().zip(sq.iter()).map(|(x, q)| x / q))
        }
    };
    let nrm = mdot(&m, &t, &t).sqrt();
    if !(nrm.is_finite() && nrm > 0.0) {
        return Err(Error::TangentSingular(lambda));
    }
    let mut t = t / nrm;
    if let Some(p) = prev {
        if mdot(&m, &t, p) < 0.0 {
            t = -t;
        }
    } else if t[0] < 0.0 {
        t = -t;
    }
    Ok(t)
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub point: Point,
    pub iterations: usize,
}

fn residual_tol(cfg: &ContinuationConfig, u: &DVector<f64>) -> f64 {
    cfg.newton_tol * (1.0 + vec_norm_inf(u))
}

/// Predictor along `t` with step h, Newton corrector on the arclength hyperplane.
pub fn step(problem: &Problem, point: &Point, t: &DVector<f64>, h: f64, cfg: &ContinuationConfig) -> Result<StepResult> {
    let m = metric(problem);
    let x0 = pack(point.lambda, &point.u);
    let mt = t.component_mul(&m);
    let mut x = &x0 + t * h;
    let n = point.u.len();
    let mut last = f64::INFINITY;
    for it in 0..=cfg.newton_max_iters {
        let (l, u) = unpack(&x);
        let f = problem.residual(l, &u);
        let r = vec_norm_inf(&f);
        if !r.is_finite() {
            break;
        }
        let g = mt.dot(&(&x - &x0)) - h;
        if r <= residual_tol(cfg, &u) && g.abs() <= 1e-12 * (1.0 + h) {
            let (det_sign, smallest_sv) = det_info(problem, l, &u, cfg.track_sv);
            return Ok(StepResult {
                point: Point { lambda: l, u, step: h, det_sign, smallest_sv, residual: r },
                iterations: it,
            });
        }
        if it == cfg.newton_max_iters || (it > 2 && r > 2.0 * last) {
            break;
        }
        last = r;
        let mut a = augmented(problem, l, &u);
        for k in 0..=n {
            a[(n, k)] = mt[k];
        }
        let mut rhs = DVector::zeros(n + 1);
        for i in 0..n {
            rhs[i] = -f[i];
        }
        rhs[n] = -g;
        let lu = Lu::new(&a);
        if lu.is_singular() {
            break;
        }
        x += lu.solve(&rhs)?;
    }
    Err(Error::StepFailure(h))
}

/// Newton on F(λ, u) = 0 with λ fixed.
pub fn correct_fixed_lambda(
    problem: &Problem,
    lambda: f64,
    u: &DVector<f64>,
    tol: f64,
    max_iters: usize,
) -> Option<(DVector<f64>, usize)> {
    let mut u = u.clone();
    for it in 0..=max_iters {
        let f = problem.residual(lambda, &u);
        let r = vec_norm_inf(&f);
        if !r.is_finite() {
            return None;
        }
        let lu = Lu::new(&problem.jac_u(lambda, &u));
        if lu.is_singular() {
            return if r <= tol * (1.0 + vec_norm_inf(&u)) { Some((u, it)) } else { None };
        }
        let du = lu.solve(&(-f)).ok()?;
        u += &du;
        if vec_norm_inf(&du) <= 1e-12 * (1.0 + vec_norm_inf(&u)) {
            let r = vec_norm_inf(&problem.residual(lambda, &u));
            return if r <= tol * (1.0 + vec_norm_inf(&u)) { Some((u, it + 1)) } else { None };
        }
    }
    None
}

/// One departing point per real local half-branch at a singular point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Departure {
    pub local_branch: usize,
    pub z: f64,
    pub point: Point,
    pub tangent: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct SwitchResult {
    pub analysis: LocalAnalysis,
    pub frame: ReductionFrame,
    pub departures: Vec<Departure>,
}

/// Corrector with z = ⟨u − u0, φ0⟩_W held fixed, unknowns (λ, u).
fn correct_fixed_z(
    problem: &Problem,
    frame: &ReductionFrame,
    lambda: f64,
    u: &DVector<f64>,
    cfg: &ContinuationConfig,
) -> Result<(f64, DVector<f64>)> {
    let n = u.len();
    let wphi = frame.phi0.component_mul(&frame.weights);
    let z = frame.z_of(u);
    let (mut l, mut u) = (lambda, u.clone());
    for _ in 0..30 {
        let f = problem.residual(l, &u);
        let r = vec_norm_inf(&f);
        let c = wphi.dot(&(&u - &frame.u0)) - z;
        if r <= 1e-2 * residual_tol(cfg, &u) && c.abs() <= 1e-14 {
            return Ok((l, u));
        }
        let mut a = DMatrix::zeros(n + 1, n + 1);
        a.view_mut((0, 0), (n, n)).copy_from(&problem.jac_u(l, &u));
        let fl = problem.jac_lambda(l, &u);
        for i in 0..n {
            a[(i, n)] = fl[i];
            a[(n, i)] = wphi[i];
        }
        let mut rhs = DVector::zeros(n + 1);
        for i in 0..n {
            rhs[i] = -f[i];
        }
        rhs[n] = -c;
        let d = Lu::new(&a).solve(&rhs)?;
        u += d.rows(0, n);
        l += d[n];
        if d.amax() <= 1e-15 * (1.0 + vec_norm_inf(&u)) {
            break;
        }
    }
    let r = vec_norm_inf(&problem.residual(l, &u));
    if r <= residual_tol(cfg, &u) {
        Ok((l, u))
    } else {
        Err(Error::NewtonFailure(format!("fixed-z corrector at z = {z:e}: residual {r:e}")))
    }
}

pub fn switch_branch(problem: &Problem, lambda0: f64, u0: &DVector<f64>, cfg: &ContinuationConfig) -> Result<SwitchResult> {
    switch_branch_with(problem, lambda0, u0, cfg, &LocalOptions::default())
}

pub fn switch_branch_with(
    problem: &Problem,
    lambda0: f64,
    u0: &DVector<f64>,
    cfg: &ContinuationConfig,
    local: &LocalOptions,
) -> Result<SwitchResult> {
    let la = local_analysis_with(problem, lambda0, u0, local)?;
    let frame = la.frame.clone().expect("frame is set by local_analysis");
    let m = metric(problem);
    let x_star = pack(la.lambda0, u0);
    let mut departures = Vec::new();
    for (k, br) in la.report.branches.iter().enumerate() {
        let b = &br.branch;
        if !b.is_real || b.z_side == 0 {
            continue;
        }
        let z = b.z_side as f64 * cfg.switch_offset;
        let lam = la.lambda0 + b.lambda_at(z);
        let y = crate::lsred::solve_complement(problem, &frame, lam, z, None, &Default::default())?;
        let u = u0 + &frame.phi0 * z + &y.y;
        let (l, u) = if b.kind == BranchKind::Vertical {
            (la.lambda0, correct_fixed_lambda(problem, la.lambda0, &u, cfg.newton_tol, 30).map(|p| p.0).unwrap_or(u))
        } else {
            correct_fixed_z(problem, &frame, lam, &u, cfg)?
        };
        let x = pack(l, &u);
        let away = &x - &x_star;
        let seed = away.clone() / mdot(&m, &away, &away).sqrt();
        let t = tangent(problem, l, &u, Some(&seed))?;
        let (det_sign, smallest_sv) = det_info(problem, l, &u, cfg.track_sv);
        let r = vec_norm_inf(&problem.residual(l, &u));
        departures.push(Departure {
            local_branch: k,
            z,
            point: Point { lambda: l, u, step: 0.0, det_sign, smallest_sv, residual: r },
            tangent: t,
        });
    }
    if departures.is_empty() {
        return Err(Error::NoDeparture);
    }
    Ok(SwitchResult { analysis: la, frame, departures })
}

fn face_gradient_max(problem: &Problem, u: &DVector<f64>) -> f64 {
    let x = &problem.grid.x;
    let n = u.len();
    let mut g: f64 = 0.0;
    for i in 0..n.saturating_sub(1) {
        g = g.max(((u[i + 1] - u[i]) / (x[i + 1] - x[i])).abs());
    }
    g
}

fn gradient_threshold(problem: &Problem) -> Option<f64> {
    problem.checks.iter().find_map(|c| match c {
        Check::GradientSentinel { threshold } => Some(*threshold),
        _ => None,
    })
}

/// Bisection on det sign along the arc from `a` with tangent `t`, arclength in (0, h).
fn locate_sign_change(problem: &Problem, a: &Point, t: &DVector<f64>, h: f64, cfg: &ContinuationConfig) -> Option<Point> {
    let quiet = ContinuationConfig { track_sv: false, ..cfg.clone() };
    let (mut lo, mut hi) = (0.0, h);
    let s0 = a.det_sign;
    let mut best: Option<Point> = None;
    let mut l_prev = f64::NAN;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let p = step(problem, a, t, mid, &quiet).ok()?.point;
        if p.det_sign == s0 {
            lo = mid;
        } else {
            hi = mid;
        }
        let dl = (p.lambda - l_prev).abs();
        l_prev = p.lambda;
        best = Some(p);
        if hi - lo <= 1e-8 || dl <= 1e-10 {
            break;
        }
    }
    best
}

/// Golden-section minimum of the smallest singular value along the arc from `a`.
fn locate_sv_min(problem: &Problem, a: &Point, t: &DVector<f64>, h: f64, cfg: &ContinuationConfig) -> Option<Point> {
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    let eval = |s: f64| step(problem, a, t, s, cfg).ok().map(|r| r.point);
    let (mut lo, mut hi) = (0.0, h);
    let mut c = hi - gr * (hi - lo);
    let mut d = lo + gr * (hi - lo);
    let mut pc = eval(c)?;
    let mut pd = eval(d)?;
    for _ in 0..80 {
        if (hi - lo) <= 1e-6 * h.max(1e-2) {
            break;
        }
        if pc.smallest_sv < pd.smallest_sv {
            hi = d;
            d = c;
            pd = pc;
            c = hi - gr * (hi - lo);
            pc = eval(c)?;
        } else {
            lo = c;
            c = d;
            pc = pd;
            d = lo + gr * (hi - lo);
            pd = eval(d)?;
        }
    }
    Some(if pc.smallest_sv < pd.smallest_sv { pc } else { pd })
}

fn confirm_kernel(problem: &Problem, p: &Point) -> bool {
    kernel_frame_at(problem, p.lambda, &p.u).is_ok()
}

/// What a trace should watch for besides bounds and events.
#[derive(Debug, Clone, Default)]
pub struct TraceContext {
    /// Singular point the trace departed from, (λ, u).
    pub anchor: Option<(f64, DVector<f64>)>,
    /// Reduction frame at the anchor, used to classify the re-entry half-branch.
    pub anchor_frame: Option<ReductionFrame>,
    pub anchor_branches: Vec<(usize, crate::localform::PuiseuxBranch)>,
    pub origin: Option<Origin>,
}

/// Continues from `start` along `direction` until closure, a bound, or max_steps.
pub fn trace(problem: &Problem, start: &Point, direction: &DVector<f64>, cfg: &ContinuationConfig, ctx: &TraceContext) -> Branch {
    let m = metric(problem);
    let hmin = 0.1 * cfg.h0;
    let hmax = 10.0 * cfg.h0;
    let mut h = cfg.h0;
    let mut points = vec![start.clone()];
    let mut events: Vec<Event> = Vec::new();
    let mut t = direction.clone();
    let x_start = pack(start.lambda, &start.u);
    let x_anchor = ctx.anchor.as_ref().map(|(l, u)| pack(*l, u));
    let mut arclength = 0.0;
    let gthr = gradient_threshold(problem);
    let mut termination = Termination::MaxSteps;
    let mut reentry = None;
    let mut contacts: Vec<f64> = ctx.anchor.as_ref().map(|a| vec![a.0]).unwrap_or_default();
    let mut tangents = vec![t.clone()];
    let mut sentinel_fired = false;

    for _ in 0..cfg.max_steps {
        let cur = points.last().unwrap().clone();
        // tangent at the current point, oriented by the previous one
        let tc = match tangent(problem, cur.lambda, &cur.u, Some(&t)) {
            Ok(v) => v,
            Err(_) => t.clone(),
        };
        // never step over the anchor or, late in the trace, the start
        let xc = pack(cur.lambda, &cur.u);
        let mut near = f64::INFINITY;
        if let Some(a) = &x_anchor {
            let d = a - &xc;
            near = near.min(mdot(&m, &d, &d).sqrt());
        }
        if arclength > 10.0 * cfg.h0 {
            let d = &x_start - &xc;
            near = near.min(mdot(&m, &d, &d).sqrt());
        }
        h = h.min((0.5 * near).max(hmin));
        let mut accepted = None;
        while h >= hmin * (1.0 - 1e-12) {
            match step(problem, &cur, &tc, h, cfg) {
                Ok(r) => {
                    let tn = tangent(problem, r.point.lambda, &r.point.u, Some(&tc)).unwrap_or_else(|_| tc.clone());
                    if mdot(&m, &tn, &tc) >= cfg.min_cos {
                        accepted = Some((r, tn));
                        break;
                    }
                    h *= 0.5;
                }
                Err(_) => h *= 0.5,
            }
        }
        let Some((res, tn)) = accepted else {
            events.push(Event {
                index: points.len() - 1,
                kind: EventKind::StepFailure,
                lambda: cur.lambda,
                u_inf: vec_norm_inf(&cur.u),
                confirmed: None,
                detail: format!("step fell below {hmin:e}"),
            });
            termination = Termination::StepFailure;
            break;
        };
        let used = h;
        if res.iterations <= 2 {
            h = (2.0 * h).min(hmax);
        }
        h = h.max(hmin);
        let mut p = res.point;
        arclength += used;

        if cfg.detect_events && cur.det_sign != 0 && p.det_sign != 0 && cur.det_sign != p.det_sign {
            let fold = tc[0] * tn[0] < 0.0;
            let loc = locate_sign_change(problem, &cur, &tc, used, cfg);
            let (lam, uinf, conf) = match &loc {
                Some(q) => (q.lambda, vec_norm_inf(&q.u), if fold { None } else { Some(confirm_kernel(problem, q)) }),
                None => (p.lambda, vec_norm_inf(&p.u), None),
            };
            events.push(Event {
                index: points.len(),
                kind: if fold { EventKind::Fold } else { EventKind::SimpleBifurcation },
                lambda: lam,
                u_inf: uinf,
                confirmed: conf,
                detail: String::new(),
            });
        }

        // sv dip at the previous point without a sign change
        if cfg.detect_events && cfg.track_sv && points.len() >= 2 {
            let a = &points[points.len() - 2];
            let b = &cur;
            if b.smallest_sv < 0.5 * a.smallest_sv.min(p.smallest_sv) && a.det_sign == b.det_sign && b.det_sign == p.det_sign {
                let ta = &tangents[tangents.len() - 2];
                let span = b.step + used;
                let loc = locate_sv_min(problem, a, ta, span, cfg);
                let q = loc.as_ref().unwrap_or(b);
                events.push(Event {
                    index: points.len() - 1,
                    kind: EventKind::SvDip,
                    lambda: q.lambda,
                    u_inf: vec_norm_inf(&q.u),
                    confirmed: Some(confirm_kernel(problem, q)),
                    detail: format!("smallest singular value {:e}", q.smallest_sv),
                });
            }
        }

        if let Some(th) = gthr {
            let g = face_gradient_max(problem, &p.u);
            if g > th && !sentinel_fired {
                sentinel_fired = true;
                events.push(Event {
                    index: points.len(),
                    kind: EventKind::GradientSentinel,
                    lambda: p.lambda,
                    u_inf: vec_norm_inf(&p.u),
                    confirmed: None,
                    detail: format!("face gradient {g:e}"),
                });
            }
        }

        // bounds
        let uinf = vec_norm_inf(&p.u);
        if p.lambda > cfg.lambda_max || p.lambda < cfg.lambda_min || uinf > cfg.u_max {
            let lb = if p.lambda > cfg.lambda_max {
                Some(cfg.lambda_max)
            } else if p.lambda < cfg.lambda_min {
                Some(cfg.lambda_min)
            } else {
                None
            };
            if let Some(lb) = lb {
                // land on the boundary
                let s = (lb - cur.lambda) / (p.lambda - cur.lambda);
                let guess = &cur.u + (&p.u - &cur.u) * s;
                if let Some((u, _)) = correct_fixed_lambda(problem, lb, &guess, cfg.newton_tol, 30) {
                    let (det_sign, smallest_sv) = det_info(problem, lb, &u, cfg.track_sv);
                    let r = vec_norm_inf(&problem.residual(lb, &u));
                    p = Point { lambda: lb, u, step: used * s, det_sign, smallest_sv, residual: r };
                }
            }
            events.push(Event {
                index: points.len(),
                kind: EventKind::BoundHit,
                lambda: p.lambda,
                u_inf: vec_norm_inf(&p.u),
                confirmed: None,
                detail: String::new(),
            });
            points.push(p);
            tangents.push(tn);
            termination = Termination::BoundHit;
            break;
        }

        // closure
        let x = pack(p.lambda, &p.u);
        let tol = cfg.closure_factor * cfg.h0;
        let steps_done = points.len();
        if steps_done > 10 && arclength > 10.0 * cfg.h0 {
            let mut targets = vec![x_start.clone()];
            if let Some(a) = &x_anchor {
                targets.push(a.clone());
            }
            let hit = targets.iter().any(|target| {
                let d = target - &x;
                let dist = mdot(&m, &d, &d).sqrt();
                dist <= tol && (mdot(&m, &d, &tn) > 0.0 || dist <= cfg.h0)
            });
            if hit {
                if let (Some(frame), Some((l0, _))) = (&ctx.anchor_frame, &ctx.anchor) {
                    let z = frame.z_of(&p.u);
                    let dl = p.lambda - l0;
                    reentry = ctx
                        .anchor_branches
                        .iter()
                        .filter(|(_, b)| b.is_real && (b.z_side as f64) * z >= 0.0)
                        .min_by(|a, b| {
                            let ea = (a.1.lambda_at(z) - dl).abs();
                            let eb = (b.1.lambda_at(z) - dl).abs();
                            ea.partial_cmp(&eb).unwrap()
                        })
                        .map(|(k, _)| *k);
                    contacts.push(*l0);
                }
                events.push(Event {
                    index: points.len(),
                    kind: EventKind::LoopClosed,
                    lambda: p.lambda,
                    u_inf: uinf,
                    confirmed: None,
                    detail: String::new(),
                });
                points.push(p);
                tangents.push(tn);
                termination = Termination::LoopClosed;
                break;
            }
        }
        points.push(p);
        tangents.push(tn.clone());
        t = tn;
    }
    if termination == Termination::MaxSteps {
        let last = points.last().unwrap();
        events.push(Event {
            index: points.len() - 1,
            kind: EventKind::MaxSteps,
            lambda: last.lambda,
            u_inf: vec_norm_inf(&last.u),
            confirmed: None,
            detail: String::new(),
        });
    }
    contacts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    contacts.dedup_by(|a, b| (*a - *b).abs() <= 1e-6);
    let origin = ctx.origin.clone().unwrap_or(Origin { lambda: start.lambda, u_inf: vec_norm_inf(&start.u), local_branch: None });
    Branch { points, events, origin, termination, reentry_branch: reentry, contacts }
}

/// Traces every departure of switch_branch at (λ0, u0).
pub fn trace_from_singular(
    problem: &Problem,
    lambda0: f64,
    u0: &DVector<f64>,
    cfg: &ContinuationConfig,
    which: Option<&[usize]>,
) -> Result<(SwitchResult, Vec<Branch>)> {
    let sw = switch_branch(problem, lambda0, u0, cfg)?;
    let ctx_base = TraceContext {
        anchor: Some((sw.analysis.lambda0, u0.clone())),
        anchor_frame: Some(sw.frame.clone()),
        anchor_branches: sw.analysis.report.branches.iter().enumerate().map(|(k, b)| (k, b.branch.clone())).collect(),
        origin: None,
    };
    let mut out = Vec::new();
    for d in &sw.departures {
        if let Some(w) = which {
            if !w.contains(&d.local_branch) {
                continue;
            }
        }
        let ctx = TraceContext {
            origin: Some(Origin { lambda: sw.analysis.lambda0, u_inf: vec_norm_inf(u0), local_branch: Some(d.local_branch) }),
            ..ctx_base.clone()
        };
        out.push(trace(problem, &d.point, &d.tangent, cfg, &ctx));
    }
    Ok((sw, out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub check: String,
    pub passed: bool,
    /// Indices of failing points.
    pub failures: Vec<usize>,
    pub checked: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorReport {
    pub results: Vec<CheckResult>,
}

impl MonitorReport {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }
}

pub fn is_positive(u: &DVector<f64>) -> bool {
    u.iter().all(|v| *v > 0.0)
}

pub fn is_negative(u: &DVector<f64>) -> bool {
    u.iter().all(|v| *v < 0.0)
}

/// Random small-seed Newton solves at λ = 0; returns the converged states that stayed away from 0.
pub fn nontrivial_at_zero(problem: &Problem, seeds: usize, amplitude: f64, rng_seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let x = &problem.grid.x;
    let (a, b) = problem.grid.domain;
    let len = b - a;
    let mut found = Vec::new();
    for _ in 0..seeds {
        let c: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let amp = amplitude * rng.gen_range(0.1..1.0);
        let mut u = DVector::from_iterator(
            x.len(),
            x.iter().map(|xi| {
                let s = std::f64::consts::PI * (xi - a) / len;
                c[0] * s.sin() + c[1] * (2.0 * s).sin() + c[2] * (3.0 * s).sin()
            }),
        );
        let m = vec_norm_inf(&u).max(1e-300);
        u *= amp / m;
        // Newton converges only linearly onto the degenerate zero and stalls near it in
        // rounding, so a thousandfold collapse of the seed counts as reaching u = 0
        let floor = 1e-3 * amp;
        for _ in 0..400 {
            let f = problem.residual(0.0, &u);
            let lu = Lu::new(&problem.jac_u(0.0, &u));
            let Ok(du) = lu.solve(&(-f)) else { break };
            u += &du;
            let ui = vec_norm_inf(&u);
            if !ui.is_finite() || ui <= floor {
                break;
            }
            if vec_norm_inf(&du) <= 1e-12 * (1.0 + ui) {
                if vec_norm_inf(&problem.residual(0.0, &u)) <= 1e-10 * (1.0 + ui) {
                    found.push(u.clone());
                }
                break;
            }
        }
    }
    found
}

/// Evaluates the problem's declared checks on a branch.
pub fn monitor(problem: &Problem, branch: &Branch, checks: &[Check], rng_seed: u64) -> MonitorReport {
    let h = problem.grid.h;
    let mut results = Vec::new();
    for c in checks {
        let r = match c {
            Check::PositiveLoopBounds => {
                let lmax = 4.0 * (1.0 + 2f64.sqrt()).powi(2) + 10.0 * h;
                let mut fails = vec![];
                let mut checked = 0;
                for (k, p) in branch.points.iter().enumerate() {
                    if !is_positive(&p.u) {
                        continue;
                    }
                    checked += 1;
                    let ui = vec_norm_inf(&p.u);
                    if !(p.lambda > 0.0 && p.lambda <= lmax && ui <= p.lambda.max(0.0).sqrt() + 1.0 + 10.0 * h) {
                        fails.push(k);
                    }
                }
                CheckResult {
                    check: "positive_loop_bounds".into(),
                    passed: fails.is_empty(),
                    failures: fails,
                    checked,
                    detail: format!("0 < lambda <= {lmax:.6}, |u|_inf <= sqrt(lambda) + 1 + 10h"),
                }
            }
            Check::SmallSolutionsOneSigned { eps } => {
                let mut fails = vec![];
                let mut checked = 0;
                for (k, p) in branch.points.iter().enumerate() {
                    let ui = vec_norm_inf(&p.u);
                    if ui <= 1e-8 || p.lambda.abs() + ui > *eps {
                        continue;
                    }
                    checked += 1;
                    if !(is_positive(&p.u) || is_negative(&p.u)) {
                        fails.push(k);
                    }
                }
                CheckResult {
                    check: "small_solutions_one_signed".into(),
                    passed: fails.is_empty(),
                    failures: fails,
                    checked,
                    detail: format!("|lambda| + |u|_inf <= {eps}"),
                }
            }
            Check::NoNontrivialAtZero { seeds, amplitude } => {
                let found = nontrivial_at_zero(problem, *seeds, *amplitude, rng_seed);
                CheckResult {
                    check: "no_nontrivial_at_zero".into(),
                    passed: found.is_empty(),
                    failures: vec![],
                    checked: *seeds,
                    detail: format!("{} nontrivial solutions from {} seeds", found.len(), seeds),
                }
            }
            Check::PositiveOnlyBelow { lambda_max } => {
                let mut fails = vec![];
                let mut checked = 0;
                for (k, p) in branch.points.iter().enumerate() {
                    if is_positive(&p.u) {
                        checked += 1;
                        if p.lambda >= *lambda_max {
                            fails.push(k);
                        }
                    }
                }
                CheckResult {
                    check: "positive_only_below".into(),
                    passed: fails.is_empty(),
                    failures: fails,
                    checked,
                    detail: format!("positive states need lambda < {lambda_max}"),
                }
            }
            Check::GradientSentinel { threshold } => {
                let fails: Vec<usize> = branch
                    .points
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| face_gradient_max(problem, &p.u) > *threshold)
                    .map(|(k, _)| k)
                    .collect();
                CheckResult {
                    check: "gradient_sentinel".into(),
                    passed: fails.is_empty(),
                    failures: fails,
                    checked: branch.points.len(),
                    detail: format!("face gradient threshold {threshold:e}"),
                }
            }
        };
        results.push(r);
    }
    MonitorReport { results }
}

/// Parity map over the gaps of a trivial-branch spectrum: P(I_n) = (a_n − a_{n−1})/2.
pub fn parity_ledger(spec: &SpectrumReport) -> Vec<LedgerEntry> {
    let (a, b) = spec.interval;
    let ev = &spec.eigenvalues;
    let mut out = Vec::new();
    let mut a_prev = 1;
    for (k, e) in ev.iter().enumerate() {
        let left = if k == 0 { a } else { 0.5 * (ev[k - 1].lambda + e.lambda) };
        let right = if k + 1 == ev.len() { b } else { 0.5 * (e.lambda + ev[k + 1].lambda) };
        let a_next = if e.chi % 2 == 1 { -a_prev } else { a_prev };
        out.push(LedgerEntry { interval: (left, right), eigenvalue: e.lambda, chi: e.chi, a_prev, a_next, p: (a_next - a_prev) / 2 });
        a_prev = a_next;
    }
    out
}

/// Σ P(I_n) over the distinct ledger entries touched by `contacts`.
pub fn contact_sum(ledger: &[LedgerEntry], contacts: &[f64], tol: f64) -> i32 {
    let mut used = vec![false; ledger.len()];
    for c in contacts {
        if let Some((k, _)) = ledger
            .iter()
            .enumerate()
            .filter(|(_, e)| (e.eigenvalue - c).abs() <= tol)
            .min_by(|a, b| (a.1.eigenvalue - c).abs().partial_cmp(&(b.1.eigenvalue - c).abs()).unwrap())
        {
            used[k] = true;
        }
    }
    ledger.iter().zip(used).filter(|(_, u)| *u).map(|(e, _)| e.p).sum()
}

/// Assembles a diagram and its parity ledger.
pub fn diagram(branches: Vec<Branch>, spectrum: Option<SpectrumReport>, contact_tol: f64) -> Diagram {
    let ledger = spectrum.as_ref().map(parity_ledger).unwrap_or_default();
    let contact_sums = branches
        .iter()
        .enumerate()
        .filter(|(_, b)| b.termination == Termination::LoopClosed)
        .map(|(k, b)| (k, contact_sum(&ledger, &b.contacts, contact_tol)))
        .collect();
    Diagram { branches, trivial_spectrum: spectrum, parity_ledger: ledger, contact_sums }
}
