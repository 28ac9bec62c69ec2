//! Randomized invariants across the numerical layers.

use bifurkit::localform::{newton_polygon, Series2};
use bifurkit::matcurve::{self, MatrixCurve};
use bifurkit::polyalg::{count_real_roots, Poly};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn spaced_roots(max: usize) -> impl Strategy<Value = Vec<f64>> {
    // sorted, pairwise at least 0.05 apart, inside (-0.9, 0.9)
    prop::collection::btree_set(-18i32..=18, 1..=max).prop_map(|s| s.into_iter().map(|k| k as f64 * 0.05 - 0.0123).collect())
}

fn diag_curve(entries: Vec<Vec<f64>>) -> MatrixCurve {
    let dim = entries.len();
    let deg = entries.iter().map(Vec::len).max().unwrap_or(0);
    MatrixCurve::from_fn(dim, move |l| {
        DMatrix::from_fn(dim, dim, |i, j| if i == j { entries[i].iter().map(|r| l - r).product::<f64>() } else { 0.0 })
    })
    .with_degree(deg)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn division_reconstructs_the_dividend(a in prop::collection::vec(-5.0f64..5.0, 1..9), b in prop::collection::vec(-5.0f64..5.0, 1..5)) {
        let (a, mut b) = (Poly::new(a), Poly::new(b));
        if b.is_zero() || b.leading().abs() < 0.1 {
            b = b.add(&Poly::new(vec![0.0; b.coeffs.len()].into_iter().chain([1.0]).collect()));
        }
        let (q, r) = a.div_rem(&b, 0.0).unwrap();
        let back = q.mul(&b).add(&r);
        for x in [-1.3, -0.2, 0.0, 0.7, 2.1] {
            prop_assert!((back.eval(x) - a.eval(x)).abs() <= 1e-9 * (1.0 + a.eval_abs(x)));
        }
        prop_assert!(r.is_zero() || r.degree() < b.degree());
    }

    #[test]
    fn sturm_counts_distinct_roots(roots in spaced_roots(7), lo in -1.0f64..0.0, hi in 0.0f64..1.0) {
        let p = Poly::from_roots(&roots);
        // keep the interval ends off the roots
        prop_assume!(roots.iter().all(|r| (r - lo).abs() > 1e-6 && (r - hi).abs() > 1e-6));
        let want = roots.iter().filter(|r| **r > lo && **r < hi).count();
        prop_assert_eq!(count_real_roots(&p, lo, hi).unwrap(), want);
    }

    #[test]
    fn spectrum_of_diagonal_curves(roots in spaced_roots(4), mult in prop::collection::vec(1usize..=2, 4), split in any::<bool>()) {
        // each root appears `mult` times, either in one diagonal entry or spread over two
        let mut entries = vec![vec![], vec![]];
        for (k, r) in roots.iter().enumerate() {
            for m in 0..mult[k] {
                entries[if split { m } else { 0 }].push(*r);
            }
        }
        entries.retain(|e| !e.is_empty());
        let curve = diag_curve(entries);
        let s = matcurve::generalized_spectrum(&curve, -1.0, 1.0).unwrap();
        prop_assert_eq!(s.eigenvalues.len(), roots.len());
        for (e, (r, m)) in s.eigenvalues.iter().zip(roots.iter().zip(&mult)) {
            prop_assert!((e.lambda - r).abs() < 1e-6, "{} vs {}", e.lambda, r);
            prop_assert_eq!(e.chi, *m);
        }
    }

    #[test]
    fn chi_is_invariant_under_constant_equivalence(
        roots in spaced_roots(3),
        p in prop::collection::vec(-0.3f64..0.3, 9),
        q in prop::collection::vec(-0.3f64..0.3, 9),
        double in any::<bool>(),
    ) {
        let r0 = roots[0];
        let mut entries = vec![vec![r0], roots[1..].to_vec()];
        if double {
            entries[1].push(r0);
        }
        entries.retain(|e| !e.is_empty());
        let base = diag_curve(entries.clone());
        let dim = base.dim();
        let pm = DMatrix::from_fn(dim, dim, |i, j| p[3 * i + j] + if i == j { 1.0 } else { 0.0 });
        let qm = DMatrix::from_fn(dim, dim, |i, j| q[3 * i + j] + if i == j { 1.0 } else { 0.0 });
        let deg = base.degree().unwrap();
        let mixed = MatrixCurve::from_fn(dim, move |l| &pm * base.eval(l) * &qm).with_degree(deg);
        let want = if double { 2 } else { 1 };
        prop_assert_eq!(matcurve::chi(&mixed, r0).unwrap(), want);
    }

    #[test]
    fn newton_polygon_is_a_lower_hull(
        chi in 1usize..4,
        zpow in 2usize..6,
        extra in prop::collection::vec(((0usize..5, 1usize..6), -2.0f64..2.0), 0..8),
    ) {
        let order = 8;
        let mut vals = vec![((chi, 0), 1.0), ((0, zpow), -0.7)];
        vals.extend(extra.into_iter().filter(|((i, j), v)| i + j <= order && v.abs() > 1e-3 && !(*j == 0)));
        let g = Series2::exact(order, vals);
        let poly = newton_polygon(&g).unwrap();
        let v = poly.vertex_pairs();
        prop_assert_eq!(v.first().copied(), Some((0, chi)));
        prop_assert_eq!(v.last().map(|p| p.1), Some(0));
        // every support point lies on or above the line through each edge
        for w in v.windows(2) {
            let (a, b) = (w[0], w[1]);
            prop_assert!(a.0 < b.0 && a.1 > b.1);
            for t in g.significant() {
                let (x, y) = (t.j as i64, t.i as i64);
                let cross = (b.0 as i64 - a.0 as i64) * (y - a.1 as i64) - (b.1 as i64 - a.1 as i64) * (x - a.0 as i64);
                prop_assert!(cross >= 0, "({x},{y}) below edge {a:?}-{b:?}");
            }
        }
        // slopes strictly increase along the hull
        for w in v.windows(3) {
            let s1 = (w[1].1 as f64 - w[0].1 as f64) / (w[1].0 as f64 - w[0].0 as f64);
            let s2 = (w[2].1 as f64 - w[1].1 as f64) / (w[2].0 as f64 - w[1].0 as f64);
            prop_assert!(s1 < s2);
        }
    }
}
