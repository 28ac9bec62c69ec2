//! Truncated bivariate series in (λ, z) and the local zero-set analysis of
//! the reduced map: Newton polygon, leading Puiseux terms, Sturm half-branch
//! counts and branch regularity.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polyalg::{count_real_roots, squarefree_part_tol, Poly};

/// A coefficient is negligible if its contribution over the fit box is
/// at most this multiple of the noise floor.
pub const NEGLIGIBLE_FACTOR: f64 = 100.0;
/// Reality threshold for Puiseux coefficients.
pub const REAL_TOL: f64 = 1e-7;
pub const DEFAULT_PROBES: [f64; 3] = [1e-2, 1e-3, 1e-4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    /// λ exponent.
    pub i: usize,
    /// z exponent.
    pub j: usize,
    pub value: f64,
    pub negligible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series2 {
    pub order: usize,
    pub center: (f64, f64),
    /// Sorted by (i, j); all pairs with i + j ≤ order that were supplied.
    pub terms: Vec<Term>,
    pub noise_floor: f64,
    /// Half-widths (Λ, Z) of the box the coefficients were fitted on.
    pub scale: (f64, f64),
}

impl Series2 {
    pub fn new<I>(order: usize, center: (f64, f64), values: I, noise_floor: f64, scale: (f64, f64)) -> Series2
    where
        I: IntoIterator<Item = ((usize, usize), f64)>,
    {
        let mut terms: Vec<Term> = values
            .into_iter()
            .filter(|((i, j), _)| i + j <= order)
            .map(|((i, j), v)| {
                let size = v.abs() * scale.0.powi(i as i32) * scale.1.powi(j as i32);
                let negligible = if noise_floor > 0.0 { size <= NEGLIGIBLE_FACTOR * noise_floor } else { v == 0.0 };
                Term { i, j, value: v, negligible }
            })
            .collect();
        terms.sort_by_key(|t| (t.i, t.j));
        terms.dedup_by_key(|t| (t.i, t.j));
        Series2 { order, center, terms, noise_floor, scale }
    }

    /// Exact coefficients: only literal zeros are negligible.
    pub fn exact<I>(order: usize, values: I) -> Series2
    where
        I: IntoIterator<Item = ((usize, usize), f64)>,
    {
        Series2::new(order, (0.0, 0.0), values, 0.0, (1.0, 1.0))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.terms.iter().find(|t| t.i == i && t.j == j).map(|t| t.value).unwrap_or(0.0)
    }

    fn term(&self, i: usize, j: usize) -> Option<&Term> {
        self.terms.iter().find(|t| t.i == i && t.j == j)
    }

    pub fn is_negligible(&self, i: usize, j: usize) -> bool {
        self.term(i, j).map(|t| t.negligible).unwrap_or(true)
    }

    pub fn significant(&self) -> impl Iterator<Item = &Term> {
        self.terms.iter().filter(|t| !t.negligible)
    }

    /// Evaluation in the shifted variables (λ - λ0, z - z0).
    pub fn eval(&self, dl: f64, dz: f64) -> f64 {
        self.terms.iter().map(|t| t.value * dl.powi(t.i as i32) * dz.powi(t.j as i32)).sum()
    }

    pub fn eval_significant(&self, dl: f64, dz: f64) -> f64 {
        self.significant().map(|t| t.value * dl.powi(t.i as i32) * dz.powi(t.j as i32)).sum()
    }

    /// The polynomial λ ↦ g(λ, z) at fixed z, significant terms only.
    pub fn lambda_poly_at(&self, dz: f64) -> Poly {
        let mut c = vec![0.0; self.order + 1];
        for t in self.significant() {
            c[t.i] += t.value * dz.powi(t.j as i32);
        }
        Poly::new(c)
    }
}

/// G = z·g: shifts (i, j+1) to (i, j).
pub fn factor_trivial(big_g: &Series2) -> Result<Series2> {
    for t in big_g.terms.iter().filter(|t| t.j == 0 && !t.negligible) {
        if t.i == 0 {
            return Err(Error::NonzeroConstantTerm(t.value));
        }
        return Err(Error::TrivialBranchNotDetected(t.i, t.value));
    }
    let z = big_g.scale.1;
    let noise = if big_g.noise_floor > 0.0 { big_g.noise_floor / z } else { 0.0 };
    let order = big_g.order.saturating_sub(1);
    let mut g = Series2::new(
        order,
        big_g.center,
        big_g.terms.iter().filter(|t| t.j >= 1).map(|t| ((t.i, t.j - 1), t.value)),
        noise,
        big_g.scale,
    );
    // keep the flags consistent with the parent fit
    for t in g.terms.iter_mut() {
        t.negligible = big_g.is_negligible(t.i, t.j + 1);
    }
    Ok(g)
}

/// Smallest i with a significant (i, 0) coefficient.
pub fn order_in_lambda(g: &Series2) -> Result<usize> {
    g.terms
        .iter()
        .filter(|t| t.j == 0 && !t.negligible)
        .map(|t| t.i)
        .min()
        .ok_or(Error::MultiplicityExceedsTruncation(g.order))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    /// z exponent.
    pub ell: usize,
    /// λ exponent.
    pub j: usize,
    pub coeff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    /// Support points on the edge, vertices included, by increasing ell.
    pub points: Vec<Vertex>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonPolygon {
    pub chi: usize,
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
}

impl NewtonPolygon {
    pub fn vertex_pairs(&self) -> Vec<(usize, usize)> {
        self.vertices.iter().map(|v| (v.ell, v.j)).collect()
    }

    /// True if the last vertex sits above the ell axis, i.e. λ divides g.
    pub fn has_vertical_branch(&self) -> bool {
        self.vertices.last().map(|v| v.j > 0).unwrap_or(false)
    }
}

pub fn newton_polygon(g: &Series2) -> Result<NewtonPolygon> {
    let support: Vec<Vertex> = g.significant().map(|t| Vertex { ell: t.j, j: t.i, coeff: t.value }).collect();
    if support.is_empty() {
        return Err(Error::InvalidArgument("empty support".into()));
    }
    let chi = order_in_lambda(g)?;
    if chi == 0 {
        return Err(Error::InvalidArgument("g(0,0) != 0: regular point".into()));
    }
    let jmin = support.iter().map(|v| v.j).min().unwrap();
    let mut cur = Vertex { ell: 0, j: chi, coeff: g.get(chi, 0) };
    let mut vertices = vec![cur.clone()];
    let mut edges = Vec::new();
    while cur.j > jmin {
        // steepest descent from the current vertex; ties go to the farthest point
        let mut best: Option<(i64, i64)> = None;
        let mut best_pt: Option<&Vertex> = None;
        for v in support.iter().filter(|v| v.j < cur.j && v.ell > cur.ell) {
            let (dj, dl) = (v.j as i64 - cur.j as i64, v.ell as i64 - cur.ell as i64);
            let better = match best {
                None => true,
                Some((bj, bl)) => {
                    let cross = dj * bl - bj * dl;
                    cross < 0 || (cross == 0 && dl > bl)
                }
            };
            if better {
                best = Some((dj, dl));
                best_pt = Some(v);
            }
        }
        let next = match best_pt {
            Some(v) => v.clone(),
            None => break,
        };
        let (dj, dl) = best.unwrap();
        let mut points: Vec<Vertex> = support
            .iter()
            .filter(|v| {
                let (pj, pl) = (v.j as i64 - cur.j as i64, v.ell as i64 - cur.ell as i64);
                pj * dl - dj * pl == 0 && v.ell >= cur.ell && v.ell <= next.ell
            })
            .cloned()
            .collect();
        if !points.iter().any(|p| p.ell == cur.ell && p.j == cur.j) {
            points.push(cur.clone());
        }
        points.sort_by_key(|p| p.ell);
        edges.push(Edge { from: vertices.len() - 1, to: vertices.len(), points });
        vertices.push(next.clone());
        cur = next;
    }
    Ok(NewtonPolygon { chi, vertices, edges })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchKind {
    /// From a polygon edge: z = s·|λ|^σ on the λ side `lambda_side`.
    Edge,
    /// The line λ ≡ 0, present when λ divides g.
    Vertical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PuiseuxBranch {
    pub kind: BranchKind,
    pub edge: usize,
    /// λ ~ c·|z|^ρ with ρ = rho_num / rho_den (reduced).
    pub rho_num: usize,
    pub rho_den: usize,
    /// +1 or -1.
    pub lambda_side: i32,
    /// Leading coefficient s of z = s·|λ|^{1/ρ}.
    pub z_coeff_re: f64,
    pub z_coeff_im: f64,
    pub is_real: bool,
    /// Sign of z along the branch; 0 for non-real branches.
    pub z_side: i32,
    /// c in λ = c·|z|^ρ on the z side, real branches only.
    pub lambda_coeff: f64,
    pub multiplicity: usize,
}

impl PuiseuxBranch {
    pub fn rho(&self) -> f64 {
        self.rho_num as f64 / self.rho_den as f64
    }

    pub fn z_coeff(&self) -> Complex64 {
        Complex64::new(self.z_coeff_re, self.z_coeff_im)
    }

    /// Leading-order λ for a given z on the branch's side.
    pub fn lambda_at(&self, z: f64) -> f64 {
        match self.kind {
            BranchKind::Vertical => 0.0,
            BranchKind::Edge => self.lambda_coeff * z.abs().powf(self.rho()),
        }
    }

    /// Leading-order z for |λ| = tau on the branch's λ side.
    pub fn z_at(&self, tau: f64) -> f64 {
        self.z_coeff_re * tau.powf(1.0 / self.rho())
    }
}

fn gcd_usize(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd_usize(b, a % b)
    }
}

pub fn puiseux_leading(polygon: &NewtonPolygon) -> Result<Vec<PuiseuxBranch>> {
    if polygon.vertices.len() < 2 {
        return Err(Error::InsufficientPolygon);
    }
    let mut out = Vec::new();
    for (ei, e) in polygon.edges.iter().enumerate() {
        let a = &polygon.vertices[e.from];
        let b = &polygon.vertices[e.to];
        let (num, den) = (b.ell - a.ell, a.j - b.j);
        let gg = gcd_usize(num, den);
        let (num, den) = (num / gg, den / gg);
        if e.points.iter().all(|p| p.coeff == 0.0) {
            return Err(Error::DegenerateEdge(ei));
        }
        for eps in [1i32, -1] {
            let deg = b.ell - a.ell;
            let mut c = vec![0.0; deg + 1];
            for p in &e.points {
                let sgn = if eps < 0 && p.j % 2 == 1 { -1.0 } else { 1.0 };
                c[p.ell - a.ell] += sgn * p.coeff;
            }
            let ep = Poly::new(c);
            if ep.is_zero() || ep.degree() == Some(0) {
                return Err(Error::DegenerateEdge(ei));
            }
            let full = ep.complex_roots();
            let sf = squarefree_part_tol(&ep.normalized(), 1e-9)?;
            for r in sf.complex_roots() {
                if r.norm() == 0.0 {
                    continue;
                }
                let mult = full.iter().filter(|q| (**q - r).norm() <= 1e-5 * (1.0 + r.norm())).count().max(1);
                let is_real = r.im.abs() <= REAL_TOL * (1.0 + r.norm());
                let (z_side, lambda_coeff) = if is_real {
                    let s = r.re;
                    (if s > 0.0 { 1 } else { -1 }, eps as f64 * s.abs().powf(-(num as f64) / den as f64))
                } else {
                    (0, 0.0)
                };
                out.push(PuiseuxBranch {
                    kind: BranchKind::Edge,
                    edge: ei,
                    rho_num: num,
                    rho_den: den,
                    lambda_side: eps,
                    z_coeff_re: if is_real { r.re } else { r.re },
                    z_coeff_im: if is_real { 0.0 } else { r.im },
                    is_real,
                    z_side,
                    lambda_coeff,
                    multiplicity: mult,
                });
            }
        }
    }
    out.extend(vertical_branches(polygon));
    Ok(out)
}

/// The two half-lines of λ ≡ 0 when λ divides g; empty otherwise.
pub fn vertical_branches(polygon: &NewtonPolygon) -> Vec<PuiseuxBranch> {
    let mut out = Vec::new();
    if polygon.has_vertical_branch() {
        let last = polygon.vertices.last().unwrap();
        for side in [1, -1] {
            out.push(PuiseuxBranch {
                kind: BranchKind::Vertical,
                edge: polygon.edges.len(),
                rho_num: 0,
                rho_den: 1,
                lambda_side: 0,
                z_coeff_re: 0.0,
                z_coeff_im: 0.0,
                is_real: true,
                z_side: side,
                lambda_coeff: 0.0,
                multiplicity: last.j,
            });
        }
    }
    out
}

/// A polynomial in λ whose coefficients are polynomials in z:
/// p(λ, z) = Σ_k coeffs[k](z) λ^k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeierstrassPoly {
    pub coeffs: Vec<Poly>,
}

impl WeierstrassPoly {
    pub fn at(&self, z: f64) -> Poly {
        Poly::new(self.coeffs.iter().map(|c| c.eval(z)).collect())
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    /// Complex λ roots at fixed z, sorted by real then imaginary part.
    pub fn roots_at(&self, z: f64) -> Vec<Complex64> {
        sorted_roots(&self.at(z))
    }
}

fn sorted_roots(p: &Poly) -> Vec<Complex64> {
    let mut r = p.complex_roots();
    r.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap().then(a.im.partial_cmp(&b.im).unwrap()));
    r
}

/// The χ roots of g(·, z) closest to λ = 0, sorted.
pub fn small_roots(g: &Series2, chi: usize, z: f64) -> Vec<Complex64> {
    let mut r = g.lambda_poly_at(z).complex_roots();
    r.sort_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap());
    r.truncate(chi);
    r.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap().then(a.im.partial_cmp(&b.im).unwrap()));
    r
}

/// Monic Weierstrass polynomial of g: at sampled z the χ small λ roots are
/// multiplied out, and each coefficient is fitted as a polynomial in z that
/// vanishes at z = 0.
pub fn weierstrass_from_series(g: &Series2, chi: usize, z_max: f64, degree: usize) -> Result<WeierstrassPoly> {
    let samples = 2 * degree + 4;
    let zs: Vec<f64> = (0..samples)
        .map(|k| z_max * (std::f64::consts::PI * (2 * k + 1) as f64 / (2 * samples) as f64).cos())
        .collect();
    let mut vals = vec![vec![0.0; samples]; chi];
    for (s, &z) in zs.iter().enumerate() {
        let roots = small_roots(g, chi, z);
        if roots.len() < chi {
            return Err(Error::MultiplicityExceedsTruncation(g.order));
        }
        let mut c = vec![Complex64::new(1.0, 0.0)];
        for r in &roots {
            let mut next = vec![Complex64::new(0.0, 0.0); c.len() + 1];
            for (k, v) in c.iter().enumerate() {
                next[k + 1] += v;
                next[k] -= v * r;
            }
            c = next;
        }
        for k in 0..chi {
            vals[k][s] = c[k].re;
        }
    }
    let basis = DMatrix::from_fn(samples, degree, |i, j| (zs[i] / z_max).powi(j as i32 + 1));
    let svd = basis.svd(true, true);
    let mut coeffs = Vec::with_capacity(chi + 1);
    for row in vals.iter() {
        let y = DVector::from_column_slice(row);
        let sol = svd.solve(&y, 1e-14).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut c = vec![0.0];
        c.extend((0..degree).map(|j| sol[j] / z_max.powi(j as i32 + 1)));
        coeffs.push(Poly::new(c));
    }
    coeffs.push(Poly::constant(1.0));
    Ok(WeierstrassPoly { coeffs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchCount {
    pub plus: usize,
    pub minus: usize,
    pub n: usize,
    /// (z, count) for every probe.
    pub per_probe: Vec<(f64, usize)>,
}

/// Distinct real λ roots of p(·, z) in (λ-, λ+) for z on each side.
pub fn sturm_branch_count(p: &WeierstrassPoly, lam_minus: f64, lam_plus: f64, probes: &[f64]) -> Result<BranchCount> {
    if !(lam_minus < 0.0 && 0.0 < lam_plus) {
        return Err(Error::InvalidInterval(lam_minus, lam_plus));
    }
    if probes.is_empty() || probes.iter().any(|z| *z <= 0.0) {
        return Err(Error::InvalidArgument("probe magnitudes must be positive".into()));
    }
    let mut per_probe = Vec::new();
    let mut side_counts = [vec![], vec![]];
    for (s, sign) in [1.0, -1.0].iter().enumerate() {
        for &m in probes {
            let z = sign * m;
            let q = p.at(z);
            let c = if q.is_zero() { 0 } else { count_real_roots(&q.normalized(), lam_minus, lam_plus)? };
            per_probe.push((z, c));
            side_counts[s].push(c);
        }
    }
    // probes are ordered from large to small; the smallest two must agree
    for sc in &side_counts {
        let k = sc.len();
        if k >= 2 && sc[k - 1] != sc[k - 2] {
            let bad = per_probe.iter().map(|(z, c)| ((z.abs().log10().round().abs()) as usize, *c)).collect();
            return Err(Error::NeighborhoodTooLarge(bad));
        }
    }
    let plus = *side_counts[0].last().unwrap();
    let minus = *side_counts[1].last().unwrap();
    Ok(BranchCount { plus, minus, n: plus + minus + 2, per_probe })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularity {
    Regular,
    /// The branch root is constant in z.
    SingularConstant,
    /// The branch root coincides with another root.
    SingularRepeated,
}

impl Regularity {
    pub fn is_regular(&self) -> bool {
        matches!(self, Regularity::Regular)
    }
}

/// Classifies root number `branch_index` of the sorted root lists returned
/// by `roots_at` along the signed probe values.
pub fn branch_regularity(roots_at: &dyn Fn(f64) -> Vec<Complex64>, branch_index: usize, probes: &[f64]) -> Regularity {
    let lists: Vec<Vec<Complex64>> = probes.iter().map(|z| roots_at(*z)).collect();
    let phi: Vec<Complex64> = lists.iter().map(|l| l.get(branch_index).copied().unwrap_or_default()).collect();
    let repeated = lists.iter().zip(probes.iter()).all(|(l, z)| {
        let p = l.get(branch_index).copied().unwrap_or_default();
        l.iter()
            .enumerate()
            .any(|(m, q)| m != branch_index && (*q - p).norm() <= 1e-6 * (p.norm() + q.norm() + z.abs()))
    });
    if repeated {
        return Regularity::SingularRepeated;
    }
    let last = *phi.last().unwrap();
    let constant = phi.iter().all(|p| (*p - last).norm() <= 1e-9 * (1.0 + last.norm()));
    if constant {
        Regularity::SingularConstant
    } else {
        Regularity::Regular
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchReport {
    pub branch: PuiseuxBranch,
    pub regularity: Option<Regularity>,
    /// Index of the matching root among the sorted real roots on its z side.
    pub root_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalReport {
    pub chi: usize,
    pub polygon: NewtonPolygon,
    pub branches: Vec<BranchReport>,
    pub counts: BranchCount,
    pub half_branch_count: usize,
    pub weierstrass: WeierstrassPoly,
}

impl LocalReport {
    pub fn real_branches(&self) -> impl Iterator<Item = &BranchReport> {
        self.branches.iter().filter(|b| b.branch.is_real)
    }
}

/// Runs the polygon → Puiseux → Weierstrass → Sturm → regularity pipeline on g.
pub fn analyze(g: &Series2, lam_window: f64, z_max: f64, probes: &[f64]) -> Result<LocalReport> {
    let chi = order_in_lambda(g)?;
    let polygon = newton_polygon(g)?;
    let puis = if polygon.vertices.len() >= 2 { puiseux_leading(&polygon)? } else { vertical_branches(&polygon) };
    let zfit = z_max.min(2.0 * probes.iter().cloned().fold(0.0, f64::max)).max(1e-12);
    let w = weierstrass_from_series(g, chi, zfit, g.order.max(chi + 1))?;
    let counts = sturm_branch_count(&w, -lam_window, lam_window, probes)?;
    let mut branches = Vec::new();
    for b in puis {
        if !b.is_real {
            branches.push(BranchReport { branch: b, regularity: None, root_index: None });
            continue;
        }
        let side = b.z_side as f64;
        let zp = side * probes[probes.len() / 2];
        let pred = b.lambda_at(zp);
        let real: Vec<f64> = w
            .roots_at(zp)
            .into_iter()
            .filter(|r| r.im.abs() <= 1e-9 * (1.0 + r.re.abs()))
            .map(|r| r.re)
            .collect();
        let idx = real
            .iter()
            .enumerate()
            .min_by(|a, b2| (a.1 - pred).abs().partial_cmp(&(b2.1 - pred).abs()).unwrap())
            .map(|(k, _)| k);
        let reg = idx.map(|k| {
            let wc = w.clone();
            let f = move |z: f64| -> Vec<Complex64> {
                wc.roots_at(z).into_iter().filter(|r| r.im.abs() <= 1e-9 * (1.0 + r.re.abs())).collect()
            };
            let signed: Vec<f64> = probes.iter().map(|m| side * m).collect();
            branch_regularity(&f, k, &signed)
        });
        branches.push(BranchReport { branch: b, regularity: reg, root_index: idx });
    }
    Ok(LocalReport { chi, polygon, half_branch_count: counts.n, counts, branches, weierstrass: w })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wp(c: Vec<Vec<f64>>) -> WeierstrassPoly {
        WeierstrassPoly { coeffs: c.into_iter().map(Poly::new).collect() }
    }

    #[test]
    fn factor_examples() {
        let big = Series2::exact(4, vec![((2, 1), 1.0), ((1, 2), 1.0)]);
        let g = factor_trivial(&big).unwrap();
        assert_eq!(g.get(2, 0), 1.0);
        assert_eq!(g.get(1, 1), 1.0);
        assert_eq!(order_in_lambda(&g).unwrap(), 2);
        let bad = Series2::exact(4, vec![((0, 0), 1e-3), ((1, 1), 1.0)]);
        assert!(matches!(factor_trivial(&bad), Err(Error::NonzeroConstantTerm(_))));
        let g = Series2::exact(3, vec![((1, 0), 1.0), ((0, 1), 1.0)]);
        assert_eq!(order_in_lambda(&g).unwrap(), 1);
    }

    #[test]
    fn polygon_examples() {
        let g = Series2::exact(6, vec![((3, 0), 1.0), ((1, 1), -2.0), ((0, 2), 0.5), ((2, 2), 4.0)]);
        let p = newton_polygon(&g).unwrap();
        assert_eq!(p.vertex_pairs(), vec![(0, 3), (1, 1), (2, 0)]);
        let g = Series2::exact(4, vec![((2, 0), 1.0)]);
        let p = newton_polygon(&g).unwrap();
        assert_eq!(p.vertex_pairs(), vec![(0, 2)]);
        assert!(matches!(puiseux_leading(&p), Err(Error::InsufficientPolygon)));
    }

    #[test]
    fn collinear_points_join_the_edge() {
        // λ² - z²: both points on one edge, roots s = ±1 on each λ side
        let g = Series2::exact(4, vec![((2, 0), 1.0), ((0, 2), -1.0)]);
        let p = newton_polygon(&g).unwrap();
        let b = puiseux_leading(&p).unwrap();
        assert_eq!(b.len(), 4);
        assert!(b.iter().all(|x| x.is_real && x.rho() == 1.0));
    }

    #[test]
    fn counts_examples() {
        // λ² + z²
        let p = wp(vec![vec![0.0, 0.0, 1.0], vec![], vec![1.0]]);
        assert_eq!(sturm_branch_count(&p, -1.0, 1.0, &DEFAULT_PROBES).unwrap().n, 2);
        // λ - z
        let p = wp(vec![vec![0.0, -1.0], vec![1.0]]);
        let c = sturm_branch_count(&p, -1.0, 1.0, &DEFAULT_PROBES).unwrap();
        assert_eq!((c.plus, c.minus, c.n), (1, 1, 4));
    }

    #[test]
    fn regularity_examples() {
        // (λ-1)(λ-z) = λ² - (1+z)λ + z
        let p = wp(vec![vec![0.0, 1.0], vec![-1.0, -1.0], vec![1.0]]);
        let f = |z: f64| p.roots_at(z);
        let probes = [1e-2, 1e-3, 1e-4];
        assert_eq!(branch_regularity(&f, 1, &probes), Regularity::SingularConstant);
        assert_eq!(branch_regularity(&f, 0, &probes), Regularity::Regular);
        // (λ-z)²
        let q = wp(vec![vec![0.0, 0.0, 1.0], vec![0.0, -2.0], vec![1.0]]);
        let f = |z: f64| q.roots_at(z);
        assert_eq!(branch_regularity(&f, 0, &probes), Regularity::SingularRepeated);
    }

    #[test]
    fn vertical_branch_is_singular() {
        // g = λ(λ - z)
        let g = Series2::exact(4, vec![((2, 0), 1.0), ((1, 1), -1.0)]);
        let r = analyze(&g, 0.5, 0.05, &DEFAULT_PROBES).unwrap();
        assert!(r.polygon.has_vertical_branch());
        let v: Vec<_> = r.branches.iter().filter(|b| b.branch.kind == BranchKind::Vertical).collect();
        assert_eq!(v.len(), 2);
        assert!(v.iter().all(|b| b.regularity == Some(Regularity::SingularConstant)));
        assert_eq!(r.half_branch_count, 6);
    }
}
