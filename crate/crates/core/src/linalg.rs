//! Dense LU with row equilibration and a few helpers built on top of it.
//!
//! The factorization skips zero multipliers and zero pivot-row entries, so
//! banded and bordered-banded systems factor in roughly O(n * bandwidth).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledDet {
    /// -1, 0 or +1.
    pub sign: f64,
    /// log|det|, `-inf` when singular.
    pub log_abs: f64,
}

impl ScaledDet {
    pub fn value(&self) -> f64 {
        self.sign * self.log_abs.exp()
    }
    pub fn scaled(&self, log_scale: f64) -> f64 {
        if self.sign == 0.0 {
            0.0
        } else {
            self.sign * (self.log_abs - log_scale).exp()
        }
    }
}

#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    diag: Vec<f64>,
    /// Strict lower / upper parts of the factors, compressed by row.
    lrows: Vec<Vec<(usize, f64)>>,
    urows: Vec<Vec<(usize, f64)>>,
    perm: Vec<usize>,
    row_scale: Vec<f64>,
    perm_sign: f64,
    singular: bool,
}

impl Lu {
    pub fn new(m: &DMatrix<f64>) -> Lu {
        assert_eq!(m.nrows(), m.ncols(), "LU needs a square matrix");
        let n = m.nrows();
        let mut a = vec![0.0; n * n];
        let mut row_scale = vec![1.0; n];
        for i in 0..n {
            let mut mx = 0.0f64;
            for j in 0..n {
                mx = mx.max(m[(i, j)].abs());
            }
            let s = if mx > 0.0 { 1.0 / mx } else { 1.0 };
            row_scale[i] = s;
            for j in 0..n {
                a[i * n + j] = m[(i, j)] * s;
            }
        }
        let mut perm: Vec<usize> = (0..n).collect();
        let mut perm_sign = 1.0;
        let mut singular = false;
        let mut nz: Vec<usize> = Vec::with_capacity(n);
        for k in 0..n {
            let mut p = k;
            let mut best = a[k * n + k].abs();
            for i in k + 1..n {
                let v = a[i * n + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 {
                singular = true;
                continue;
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
                perm_sign = -perm_sign;
            }
            let piv = a[k * n + k];
            nz.clear();
            for j in k + 1..n {
                if a[k * n + j] != 0.0 {
                    nz.push(j);
                }
            }
            for i in k + 1..n {
                let aik = a[i * n + k];
                if aik == 0.0 {
                    continue;
                }
                let mult = aik / piv;
                a[i * n + k] = mult;
                for &j in &nz {
                    a[i * n + j] -= mult * a[k * n + j];
                }
            }
        }
        let mut diag = vec![0.0; n];
        let mut lrows = vec![Vec::new(); n];
        let mut urows = vec![Vec::new(); n];
        for i in 0..n {
            diag[i] = a[i * n + i];
            for j in 0..n {
                let v = a[i * n + j];
                if v != 0.0 && j != i {
                    if j < i {
                        lrows[i].push((j, v));
                    } else {
                        urows[i].push((j, v));
                    }
                }
            }
        }
        Lu { n, diag, lrows, urows, perm, row_scale, perm_sign, singular }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_singular(&self) -> bool {
        self.singular
    }

    pub fn det(&self) -> ScaledDet {
        if self.singular {
            return ScaledDet { sign: 0.0, log_abs: f64::NEG_INFINITY };
        }
        let n = self.n;
        let mut sign = self.perm_sign;
        let mut log_abs = 0.0;
        for k in 0..n {
            let u = self.diag[k];
            if u < 0.0 {
                sign = -sign;
            }
            log_abs += u.abs().ln();
        }
        for s in &self.row_scale {
            log_abs -= s.ln();
        }
        ScaledDet { sign, log_abs }
    }

    /// Smallest |u_kk| of the equilibrated factor, a cheap singularity indicator.
    pub fn min_pivot(&self) -> f64 {
        self.diag.iter().map(|d| d.abs()).fold(f64::INFINITY, f64::min)
    }

    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        if self.singular {
            return Err(Error::NewtonFailure("singular matrix".into()));
        }
        let n = self.n;
        let mut x = vec![0.0; n];
        for i in 0..n {
            x[i] = b[self.perm[i]] * self.row_scale[self.perm[i]];
        }
        for i in 0..n {
            let mut s = x[i];
            for &(j, l) in &self.lrows[i] {
                s -= l * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for &(j, u) in &self.urows[i] {
                s -= u * x[j];
            }
            x[i] = s / self.diag[i];
        }
        Ok(DVector::from_vec(x))
    }

    /// Solves `A^T y = c`.
    pub fn solve_transpose(&self, c: &DVector<f64>) -> Result<DVector<f64>> {
        if self.singular {
            return Err(Error::NewtonFailure("singular matrix".into()));
        }
        let n = self.n;
        let mut v: Vec<f64> = c.iter().copied().collect();
        // U^T v = c, column-oriented over the rows of U
        for i in 0..n {
            v[i] /= self.diag[i];
            let vi = v[i];
            if vi != 0.0 {
                for &(j, u) in &self.urows[i] {
                    v[j] -= u * vi;
                }
            }
        }
        // L^T q = v
        for i in (0..n).rev() {
            let vi = v[i];
            if vi != 0.0 {
                for &(j, l) in &self.lrows[i] {
                    v[j] -= l * vi;
                }
            }
        }
        let mut y = vec![0.0; n];
        for i in 0..n {
            let r = self.perm[i];
            y[r] = v[i] * self.row_scale[r];
        }
        Ok(DVector::from_vec(y))
    }

    /// Estimate of the smallest singular value by inverse iteration on A^T A.
    pub fn smallest_singular_value(&self, iters: usize) -> f64 {
        if self.singular {
            return 0.0;
        }
        let n = self.n;
        let mut x = DVector::from_fn(n, |i, _| 1.0 + 0.5 * ((i * 7919 % 13) as f64 / 13.0));
        x /= x.norm();
        let mut est = f64::INFINITY;
        for _ in 0..iters.max(1) {
            let y = match self.solve_transpose(&x) {
                Ok(y) => y,
                Err(_) => return 0.0,
            };
            let z = match self.solve(&y) {
                Ok(z) => z,
                Err(_) => return 0.0,
            };
            let nz = z.norm();
            if !nz.is_finite() || nz == 0.0 {
                return 0.0;
            }
            let prev = est;
            est = 1.0 / nz.sqrt();
            x = z / nz;
            if (prev - est).abs() <= 1e-8 * est {
                break;
            }
        }
        est
    }
}

pub fn norm_inf(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn vec_norm_inf(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// SVD with singular values sorted in decreasing order.
pub struct SortedSvd {
    pub u: DMatrix<f64>,
    pub sigma: Vec<f64>,
    pub v: DMatrix<f64>,
}

pub fn sorted_svd(m: &DMatrix<f64>) -> SortedSvd {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].partial_cmp(&svd.singular_values[a]).unwrap());
    let k = idx.len();
    let mut us = DMatrix::zeros(u.nrows(), k);
    let mut vs = DMatrix::zeros(vt.ncols(), k);
    let mut sigma = Vec::with_capacity(k);
    for (c, &i) in idx.iter().enumerate() {
        us.set_column(c, &u.column(i));
        vs.set_column(c, &vt.row(i).transpose());
        sigma.push(svd.singular_values[i]);
    }
    SortedSvd { u: us, sigma, v: vs }
}

/// Numerical rank with threshold `rel * max(sigma_max, 1)`.
pub fn numerical_rank(m: &DMatrix<f64>, rel: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let s = m.clone().singular_values();
    let mx = s.iter().fold(0.0f64, |a, &b| a.max(b));
    let thr = rel * mx.max(1.0);
    s.iter().filter(|&&v| v > thr).count()
}

/// Eigenpair of `a` closest to `shift`, by shifted inverse iteration.
///
/// Returns the Rayleigh quotient and a unit eigenvector of the iterate.
pub fn nearest_eigenpair(
    a: &DMatrix<f64>,
    shift: f64,
    start: Option<&DVector<f64>>,
    tol: f64,
    max_iter: usize,
) -> Result<(f64, DVector<f64>)> {
    let n = a.nrows();
    let anorm = norm_inf(a).max(1e-300);
    let mut s = shift;
    let mut shifted = a.clone();
    for i in 0..n {
        shifted[(i, i)] -= s;
    }
    let mut lu = Lu::new(&shifted);
    if lu.is_singular() {
        s += 1e-10 * (1.0 + anorm);
        for i in 0..n {
            shifted[(i, i)] = a[(i, i)] - s;
        }
        lu = Lu::new(&shifted);
    }
    let mut x = match start {
        Some(v) => v.clone(),
        None => DVector::from_fn(n, |i, _| 1.0 + ((i * 31 % 17) as f64) / 17.0),
    };
    x /= x.norm();
    let mut mu = s;
    for _ in 0..max_iter {
        let y = lu.solve(&x)?;
        let ny = y.norm();
        if !ny.is_finite() || ny == 0.0 {
            return Err(Error::EigenIterationFailed(shift));
        }
        let mut xn = y / ny;
        if xn.dot(&x) < 0.0 {
            xn = -xn;
        }
        let ax = a * &xn;
        mu = xn.dot(&ax);
        let res = (&ax - &xn * mu).norm();
        x = xn;
        if res <= tol * anorm {
            return Ok((mu, x));
        }
    }
    let ax = a * &x;
    let res = (&ax - &x * mu).norm();
    if res <= 1e3 * tol * anorm {
        Ok((mu, x))
    } else {
        Err(Error::EigenIterationFailed(shift))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 4.0, -1.0, 3.0, 0.5, 2.0, 7.0])
    }

    #[test]
    fn det_matches_nalgebra() {
        let m = sample();
        let d = Lu::new(&m).det().value();
        assert!((d - m.determinant()).abs() < 1e-12 * m.determinant().abs());
    }

    #[test]
    fn solves_both_ways() {
        let m = sample();
        let lu = Lu::new(&m);
        let b = DVector::from_vec(vec![1.0, -2.0, 0.25]);
        let x = lu.solve(&b).unwrap();
        assert!((&m * &x - &b).norm() < 1e-13);
        let y = lu.solve_transpose(&b).unwrap();
        assert!((m.transpose() * &y - &b).norm() < 1e-13);
    }

    #[test]
    fn singular_detected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let lu = Lu::new(&m);
        assert!(lu.is_singular() || lu.min_pivot() < 1e-15);
        assert_eq!(lu.det().scaled(0.0).abs() < 1e-15, true);
    }

    #[test]
    fn smallest_sv_estimate() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1e-3, 2.0]));
        let s = Lu::new(&m).smallest_singular_value(20);
        assert!((s - 1e-3).abs() < 1e-9);
    }

    #[test]
    fn eigenpair_near_shift() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 0.1, -2.0]));
        let (mu, _) = nearest_eigenpair(&m, 0.0, None, 1e-12, 100).unwrap();
        assert!((mu - 0.1).abs() < 1e-10);
    }
}
