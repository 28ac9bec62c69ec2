//! Univariate real polynomials, Sturm chains and real-root isolation.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Lu;

/// Relative drop tolerance used by Euclidean division.
pub const DROP_TOL: f64 = 1e-12;
/// Outward nudge applied to an endpoint that lands on a root.
pub const ENDPOINT_NUDGE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Poly {
    /// Constant term first.
    pub coeffs: Vec<f64>,
}

impl Poly {
    /// Builds a polynomial, trimming exactly-zero leading coefficients.
    pub fn new(mut coeffs: Vec<f64>) -> Poly {
        while matches!(coeffs.last(), Some(c) if *c == 0.0) {
            coeffs.pop();
        }
        Poly { coeffs }
    }

    pub fn zero() -> Poly {
        Poly { coeffs: vec![] }
    }

    pub fn constant(c: f64) -> Poly {
        Poly::new(vec![c])
    }

    pub fn x() -> Poly {
        Poly::new(vec![0.0, 1.0])
    }

    pub fn from_roots(roots: &[f64]) -> Poly {
        let mut p = Poly::constant(1.0);
        for &r in roots {
            p = p.mul(&Poly::new(vec![-r, 1.0]));
        }
        p
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree, or `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        if self.coeffs.is_empty() {
            None
        } else {
            Some(self.coeffs.len() - 1)
        }
    }

    pub fn leading(&self) -> f64 {
        self.coeffs.last().copied().unwrap_or(0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |a, c| a.max(c.abs()))
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// Σ|c_k||x|^k, the natural magnitude of the terms at x.
    pub fn eval_abs(&self, x: f64) -> f64 {
        let ax = x.abs();
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * ax + c.abs())
    }

    pub fn derivative(&self) -> Poly {
        if self.coeffs.len() <= 1 {
            return Poly::zero();
        }
        Poly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| k as f64 * c)
                .collect(),
        )
    }

    pub fn scale(&self, s: f64) -> Poly {
        Poly::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let n = self.coeffs.len().max(other.coeffs.len());
        Poly::new(
            (0..n)
                .map(|k| self.coeffs.get(k).unwrap_or(&0.0) + other.coeffs.get(k).unwrap_or(&0.0))
                .collect(),
        )
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.scale(-1.0))
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        if self.is_zero() || other.is_zero() {
            return Poly::zero();
        }
        let mut c = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                c[i + j] += a * b;
            }
        }
        Poly::new(c)
    }

    /// Drops leading coefficients with |c| ≤ tol·(1+max|c|).
    pub fn trimmed(&self, tol: f64) -> Poly {
        let thr = tol * self.max_abs();
        let mut c = self.coeffs.clone();
        while matches!(c.last(), Some(v) if v.abs() <= thr) {
            c.pop();
        }
        Poly::new(c)
    }

    /// Rescaled to unit max-abs coefficient (positive factor, signs kept).
    pub fn normalized(&self) -> Poly {
        let m = self.max_abs();
        if m == 0.0 {
            Poly::zero()
        } else {
            self.scale(1.0 / m)
        }
    }

    pub fn monic(&self) -> Poly {
        if self.is_zero() {
            Poly::zero()
        } else {
            self.scale(1.0 / self.leading())
        }
    }

    /// Euclidean division with drop tolerance relative to both operands.
    pub fn div_rem(&self, d: &Poly, tol: f64) -> Result<(Poly, Poly)> {
        let d = d.trimmed(tol);
        if d.is_zero() {
            return Err(Error::DivisionByZero);
        }
        let dd = d.coeffs.len() - 1;
        let mut r = self.coeffs.clone();
        if r.len() <= dd {
            return Ok((Poly::zero(), self.clone()));
        }
        let mut q = vec![0.0; r.len() - dd];
        let lead = d.leading();
        for k in (0..q.len()).rev() {
            let c = r[k + dd] / lead;
            q[k] = c;
            for (j, dc) in d.coeffs.iter().enumerate() {
                r[k + j] -= c * dc;
            }
            r[k + dd] = 0.0;
        }
        r.truncate(dd);
        // cancellation error scale of r = self - quotient·d
        let qmax = q.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let thr = tol * self.max_abs().max(qmax * d.max_abs());
        for v in r.iter_mut() {
            if v.abs() <= thr {
                *v = 0.0;
            }
        }
        Ok((Poly::new(q), Poly::new(r)))
    }

    /// Complex roots from the companion matrix eigenvalues.
    pub fn complex_roots(&self) -> Vec<Complex64> {
        let deg = match self.degree() {
            Some(d) if d >= 1 => d,
            _ => return vec![],
        };
        // exact zero roots first; they make the companion matrix needlessly singular
        let mut zeros = 0;
        while zeros < deg && self.coeffs[zeros] == 0.0 {
            zeros += 1;
        }
        let mut out = vec![Complex64::new(0.0, 0.0); zeros];
        let c = &self.coeffs[zeros..];
        let d = c.len() - 1;
        if d == 0 {
            return out;
        }
        if d == 1 {
            out.push(Complex64::new(-c[0] / c[1], 0.0));
            return out;
        }
        let lead = c[d];
        let mut m = DMatrix::<f64>::zeros(d, d);
        for i in 1..d {
            m[(i, i - 1)] = 1.0;
        }
        for i in 0..d {
            m[(i, d - 1)] = -c[i] / lead;
        }
        out.extend(m.complex_eigenvalues().iter().copied());
        out
    }
}

/// gcd with drop tolerance, normalized to unit max coefficient.
pub fn gcd(a: &Poly, b: &Poly, tol: f64) -> Poly {
    let mut x = a.trimmed(tol).normalized();
    let mut y = b.trimmed(tol).normalized();
    if x.is_zero() {
        return y;
    }
    while !y.is_zero() {
        let (_, r) = match x.div_rem(&y, tol) {
            Ok(v) => v,
            Err(_) => break,
        };
        x = y;
        y = r.trimmed(tol).normalized();
    }
    x.normalized()
}

/// q / gcd(q, q') with drop tolerance `tol`, monic.
pub fn squarefree_part_tol(q: &Poly, tol: f64) -> Result<Poly> {
    let q = q.trimmed(tol);
    if q.is_zero() {
        return Err(Error::ZeroPolynomial);
    }
    if q.degree() == Some(0) {
        return Ok(q.monic());
    }
    let g = gcd(&q.normalized(), &q.derivative().normalized(), tol);
    if g.degree().unwrap_or(0) == 0 {
        return Ok(q.monic());
    }
    let (s, _) = q.normalized().div_rem(&g, tol)?;
    Ok(s.monic())
}

pub fn squarefree_part(q: &Poly) -> Result<Poly> {
    squarefree_part_tol(q, DROP_TOL)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SturmChain {
    pub polys: Vec<Poly>,
    pub source: Poly,
    /// Drop tolerance used while building the chain.
    pub tol: f64,
}

pub fn sturm_chain(q: &Poly) -> Result<SturmChain> {
    sturm_chain_tol(q, DROP_TOL)
}

pub fn sturm_chain_tol(q: &Poly, tol: f64) -> Result<SturmChain> {
    if q.trimmed(tol).is_zero() {
        return Err(Error::ZeroPolynomial);
    }
    let q0 = q.trimmed(tol);
    let mut polys = vec![q0.clone()];
    let d = q0.derivative();
    if d.is_zero() {
        return Ok(SturmChain { polys, source: q.clone(), tol });
    }
    polys.push(d);
    loop {
        let n = polys.len();
        let (_, r) = polys[n - 2].div_rem(&polys[n - 1], tol)?;
        let r = r.trimmed(tol);
        if r.is_zero() {
            break;
        }
        polys.push(r.scale(-1.0));
        if polys.last().unwrap().degree() == Some(0) {
            break;
        }
    }
    Ok(SturmChain { polys, source: q.clone(), tol })
}

impl SturmChain {
    /// Number of sign changes at `xi`, ignoring numerically zero entries.
    pub fn sign_changes(&self, xi: f64) -> usize {
        let mut last = 0.0f64;
        let mut count = 0;
        for p in &self.polys {
            let v = p.eval(xi);
            let mag = p.eval_abs(xi);
            if v == 0.0 || v.abs() <= self.tol * mag {
                continue;
            }
            if last != 0.0 && v.signum() != last.signum() {
                count += 1;
            }
            last = v;
        }
        count
    }
}

pub fn sign_changes(chain: &SturmChain, xi: f64) -> usize {
    chain.sign_changes(xi)
}

fn nudge_off_root(q: &Poly, x: f64, outward: f64) -> f64 {
    let mut x = x;
    for _ in 0..8 {
        let v = q.eval(x);
        if v.abs() > 1e-13 * q.eval_abs(x) {
            break;
        }
        x += outward * ENDPOINT_NUDGE * (1.0 + x.abs());
    }
    x
}

/// Distinct real roots of `q` in (a,b), counted on the square-free part.
pub fn count_real_roots(q: &Poly, a: f64, b: f64) -> Result<usize> {
    count_real_roots_tol(q, a, b, DROP_TOL)
}

pub fn count_real_roots_tol(q: &Poly, a: f64, b: f64, tol: f64) -> Result<usize> {
    if !(a < b) {
        return Err(Error::InvalidInterval(a, b));
    }
    let s = squarefree_part_tol(q, tol)?;
    let chain = sturm_chain_tol(&s, tol)?;
    let a = nudge_off_root(&s, a, -1.0);
    let b = nudge_off_root(&s, b, 1.0);
    let va = chain.sign_changes(a);
    let vb = chain.sign_changes(b);
    Ok(va.saturating_sub(vb))
}

/// Disjoint intervals, each holding one distinct root, of width ≤ `width`.
pub fn isolate_roots(q: &Poly, a: f64, b: f64, width: f64) -> Result<Vec<(f64, f64)>> {
    isolate_roots_tol(q, a, b, width, DROP_TOL)
}

pub fn isolate_roots_tol(q: &Poly, a: f64, b: f64, width: f64, tol: f64) -> Result<Vec<(f64, f64)>> {
    if !(a < b) {
        return Err(Error::InvalidInterval(a, b));
    }
    if !(width > 0.0) {
        return Err(Error::InvalidArgument("width must be positive".into()));
    }
    let s = squarefree_part_tol(q, tol)?;
    let chain = sturm_chain_tol(&s, tol)?;
    let a = nudge_off_root(&s, a, -1.0);
    let b = nudge_off_root(&s, b, 1.0);
    let mut out = Vec::new();
    let mut stack = vec![(a, b, chain.sign_changes(a), chain.sign_changes(b), 0usize)];
    while let Some((lo, hi, vlo, vhi, depth)) = stack.pop() {
        let cnt = vlo.saturating_sub(vhi);
        if cnt == 0 {
            continue;
        }
        if (cnt == 1 && hi - lo <= width) || depth > 200 {
            out.push((lo, hi));
            continue;
        }
        let mut mid = 0.5 * (lo + hi);
        if s.eval(mid).abs() <= 1e-13 * s.eval_abs(mid) {
            // shift the split point slightly; it must stay strictly inside
            mid += 0.25 * (hi - lo) * 1e-3;
        }
        let vm = chain.sign_changes(mid);
        stack.push((mid, hi, vm, vhi, depth + 1));
        stack.push((lo, mid, vlo, vm, depth + 1));
    }
    out.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    Ok(out)
}

/// Determinant of the Sylvester matrix of `p` and `q`.
pub fn resultant(p: &Poly, q: &Poly) -> f64 {
    let (m, n) = match (p.degree(), q.degree()) {
        (Some(m), Some(n)) => (m, n),
        _ => return 0.0,
    };
    let size = m + n;
    if size == 0 {
        return 1.0;
    }
    let mut s = DMatrix::<f64>::zeros(size, size);
    // rows hold coefficients leading first
    for r in 0..n {
        for (k, c) in p.coeffs.iter().rev().enumerate() {
            s[(r, r + k)] = *c;
        }
    }
    for r in 0..m {
        for (k, c) in q.coeffs.iter().rev().enumerate() {
            s[(n + r, r + k)] = *c;
        }
    }
    Lu::new(&s).det().value()
}

/// Disc(q) = (-1)^{n(n-1)/2} Res(q, q') / a_n.
pub fn discriminant(q: &Poly) -> Result<f64> {
    let n = match q.degree() {
        Some(n) if n >= 1 => n,
        _ => return Err(Error::InvalidArgument("discriminant needs degree >= 1".into())),
    };
    if n == 1 {
        return Ok(1.0);
    }
    let r = resultant(q, &q.derivative());
    let sign = if (n * (n - 1) / 2) % 2 == 0 { 1.0 } else { -1.0 };
    Ok(sign * r / q.leading())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: &[f64]) -> Poly {
        Poly::new(c.to_vec())
    }

    #[test]
    fn chain_of_x2_minus_1() {
        let ch = sturm_chain(&p(&[-1.0, 0.0, 1.0])).unwrap();
        assert_eq!(ch.polys, vec![p(&[-1.0, 0.0, 1.0]), p(&[0.0, 2.0]), p(&[1.0])]);
        assert_eq!(ch.sign_changes(-2.0), 2);
        assert_eq!(ch.sign_changes(0.0), 1);
        assert_eq!(ch.sign_changes(2.0), 0);
    }

    #[test]
    fn chain_of_x2_plus_1() {
        let ch = sturm_chain(&p(&[1.0, 0.0, 1.0])).unwrap();
        assert_eq!(ch.polys, vec![p(&[1.0, 0.0, 1.0]), p(&[0.0, 2.0]), p(&[-1.0])]);
    }

    #[test]
    fn chain_stops_at_common_factor() {
        // (x-1)^2 (x+1): gcd with q' is x-1
        let q = Poly::from_roots(&[1.0, 1.0, -1.0]);
        let ch = sturm_chain(&q).unwrap();
        let last = ch.polys.last().unwrap();
        assert_eq!(last.degree(), Some(1));
        assert!((last.eval(1.0)).abs() < 1e-12 * last.max_abs());
    }

    #[test]
    fn zero_poly_rejected() {
        assert_eq!(sturm_chain(&Poly::zero()), Err(Error::ZeroPolynomial));
    }

    #[test]
    fn counts() {
        assert_eq!(count_real_roots(&p(&[-1.0, 0.0, 1.0]), -2.0, 2.0).unwrap(), 2);
        assert_eq!(count_real_roots(&p(&[1.0, 0.0, 1.0]), -2.0, 2.0).unwrap(), 0);
        assert!(count_real_roots(&p(&[1.0]), 1.0, 1.0).is_err());
        // endpoint on a root gets nudged outward
        assert_eq!(count_real_roots(&p(&[-1.0, 0.0, 1.0]), -1.0, 1.0).unwrap(), 2);
    }

    #[test]
    fn squarefree_examples() {
        let s = squarefree_part(&Poly::from_roots(&[1.0, 1.0])).unwrap();
        assert_eq!(s.degree(), Some(1));
        assert!((s.eval(1.0)).abs() < 1e-10);
        let s = squarefree_part(&Poly::from_roots(&[1.0, 1.0, -2.0, -2.0, -2.0])).unwrap();
        assert_eq!(s.degree(), Some(2));
        assert!(s.eval(1.0).abs() < 1e-8 && s.eval(-2.0).abs() < 1e-8);
    }

    #[test]
    fn isolation() {
        let iv = isolate_roots(&p(&[-1.0, 0.0, 1.0]), -2.0, 2.0, 1e-6).unwrap();
        assert_eq!(iv.len(), 2);
        assert!(iv[0].0 <= -1.0 && -1.0 <= iv[0].1 && iv[0].1 - iv[0].0 <= 1e-6);
        assert!(isolate_roots(&p(&[1.0, 0.0, 1.0]), -2.0, 2.0, 1e-6).unwrap().is_empty());
        let q = Poly::from_roots(&[0.1, 0.2, 0.3, 0.4]);
        let iv = isolate_roots(&q, 0.0, 1.0, 1e-8).unwrap();
        assert_eq!(iv.len(), 4);
        for (k, (lo, hi)) in iv.iter().enumerate() {
            let r = 0.1 * (k + 1) as f64;
            assert!(*lo <= r + 1e-12 && r - 1e-12 <= *hi);
        }
    }

    #[test]
    fn discriminants() {
        let (b, c) = (0.7, -1.3);
        let d = discriminant(&p(&[c, b, 1.0])).unwrap();
        assert!((d - (b * b - 4.0 * c)).abs() < 1e-12);
        assert!(discriminant(&p(&[1.0, -2.0, 1.0])).unwrap().abs() < 1e-12);
        let (pp, qq) = (-2.0, 0.5);
        let d = discriminant(&p(&[qq, pp, 0.0, 1.0])).unwrap();
        assert!((d - (-4.0 * pp * pp * pp - 27.0 * qq * qq)).abs() < 1e-10);
    }

    #[test]
    fn companion_roots() {
        let r = Poly::from_roots(&[2.0, -1.0, 0.5]).complex_roots();
        let mut re: Vec<f64> = r.iter().map(|c| c.re).collect();
        re.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((re[0] + 1.0).abs() < 1e-12 && (re[2] - 2.0).abs() < 1e-12);
    }
}
