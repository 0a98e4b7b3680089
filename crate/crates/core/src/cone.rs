//! The constraint cone `K = {0}^E x (-inf, 0]^I` and the operations the
//! augmented Lagrangian needs from it.
//!
//! Indices are zero-based. A constraint vector `y` is feasible when
//! `y_i = 0` for equality indices and `y_i <= 0` for inequality indices.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Default tolerance for the membership predicates.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Split of the constraint indices `0..n` into equalities and inequalities.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConePartition {
    n: usize,
    equality: Vec<usize>,
    inequality: Vec<usize>,
}

impl ConePartition {
    /// Builds a partition from explicit index lists. The lists are sorted
    /// and must cover `0..n` exactly once between them.
    pub fn new(n: usize, mut equality: Vec<usize>, mut inequality: Vec<usize>) -> Result<Self> {
        equality.sort_unstable();
        inequality.sort_unstable();
        let mut seen = vec![false; n];
        for &i in equality.iter().chain(inequality.iter()) {
            if i >= n {
                return Err(Error::Parameter(format!(
                    "constraint index {i} out of range for n = {n}"
                )));
            }
            if seen[i] {
                return Err(Error::Parameter(format!(
                    "constraint index {i} listed more than once"
                )));
            }
            seen[i] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Parameter(format!(
                "constraint index {missing} is neither equality nor inequality"
            )));
        }
        Ok(Self {
            n,
            equality,
            inequality,
        })
    }

    pub fn all_inequality(n: usize) -> Self {
        Self {
            n,
            equality: Vec::new(),
            inequality: (0..n).collect(),
        }
    }

    pub fn all_equality(n: usize) -> Self {
        Self {
            n,
            equality: (0..n).collect(),
            inequality: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn equality(&self) -> &[usize] {
        &self.equality
    }

    pub fn inequality(&self) -> &[usize] {
        &self.inequality
    }

    fn check(&self, y: &[f64]) -> Result<()> {
        check_len("constraint vector", self.n, y.len())
    }

    /// Componentwise projection onto `K`.
    pub fn project(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check(y)?;
        let mut out = vec![0.0; self.n];
        for &i in &self.inequality {
            out[i] = y[i].min(0.0);
        }
        Ok(out)
    }

    /// `y - project(y)`, the part of `y` sticking out of the cone.
    pub fn residual(&self, y: &[f64]) -> Result<Vec<f64>> {
        let p = self.project(y)?;
        Ok(y.iter().zip(&p).map(|(a, b)| a - b).collect())
    }

    /// Euclidean distance from `y` to `K`.
    pub fn distance(&self, y: &[f64]) -> Result<f64> {
        Ok(norm2(&self.residual(y)?))
    }

    /// Whether `s` lies in `K` up to `tol`.
    pub fn contains(&self, s: &[f64], tol: f64) -> Result<bool> {
        self.check(s)?;
        Ok(self.equality.iter().all(|&i| s[i].abs() <= tol)
            && self.inequality.iter().all(|&i| s[i] <= tol))
    }

    /// Membership of `v` in the normal cone of `K` at `s`.
    ///
    /// Uses the finite characterization: inequality components need
    /// `v_i >= 0` and `v_i s_i = 0`; equality components are free. The
    /// normal cone is empty when `s` is not in `K`.
    pub fn in_normal_cone(&self, v: &[f64], s: &[f64], tol: f64) -> Result<bool> {
        self.check(v)?;
        if !self.contains(s, tol)? {
            return Ok(false);
        }
        Ok(self
            .inequality
            .iter()
            .all(|&i| v[i] >= -tol && (v[i] * s[i]).abs() <= tol))
    }

    /// Membership in `{y : y^T k >= 0 for all k in K}`. Since `k_i <= 0`
    /// on the inequality indices this forces `y_i <= 0` there.
    pub fn in_dual_cone(&self, y: &[f64], tol: f64) -> Result<bool> {
        self.check(y)?;
        Ok(self.inequality.iter().all(|&i| y[i] <= tol))
    }
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mixed(n_eq: usize, n: usize) -> ConePartition {
        ConePartition::new(n, (0..n_eq).collect(), (n_eq..n).collect()).unwrap()
    }

    #[test]
    fn projection_examples() {
        let p = mixed(1, 2);
        assert_eq!(p.project(&[0.3, 0.4]).unwrap(), vec![0.0, 0.0]);
        let q = ConePartition::all_inequality(2);
        assert_eq!(q.project(&[-0.2, -0.5]).unwrap(), vec![-0.2, -0.5]);
        assert_eq!(q.project(&[3.0, 4.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn distance_examples() {
        let q = ConePartition::all_inequality(2);
        assert_eq!(q.distance(&[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(q.distance(&[-1.0, -1.0]).unwrap(), 0.0);
        assert_eq!(
            ConePartition::all_equality(1).distance(&[0.6]).unwrap(),
            0.6
        );
    }

    #[test]
    fn normal_cone_examples() {
        let ineq = ConePartition::all_inequality(1);
        assert!(ineq.in_normal_cone(&[2.0], &[0.0], DEFAULT_TOL).unwrap());
        assert!(!ineq.in_normal_cone(&[2.0], &[-1.0], DEFAULT_TOL).unwrap());
        let eq = ConePartition::all_equality(1);
        assert!(eq.in_normal_cone(&[-3.0], &[0.0], DEFAULT_TOL).unwrap());
        // s outside K: empty normal cone
        assert!(!ineq.in_normal_cone(&[0.0], &[1.0], DEFAULT_TOL).unwrap());
    }

    #[test]
    fn dual_cone_examples() {
        let q = ConePartition::all_inequality(2);
        assert!(q.in_dual_cone(&[-1.0, 0.0], DEFAULT_TOL).unwrap());
        assert!(!ConePartition::all_inequality(1)
            .in_dual_cone(&[0.5], DEFAULT_TOL)
            .unwrap());
        assert!(ConePartition::all_equality(1)
            .in_dual_cone(&[7.0], DEFAULT_TOL)
            .unwrap());
    }

    #[test]
    fn dimension_errors() {
        let q = ConePartition::all_inequality(2);
        assert!(matches!(q.project(&[1.0]), Err(Error::Dimension { .. })));
        assert!(q.distance(&[1.0, 2.0, 3.0]).is_err());
        assert!(q.in_dual_cone(&[1.0], 0.0).is_err());
    }

    #[test]
    fn malformed_partitions_rejected() {
        assert!(ConePartition::new(2, vec![0], vec![0]).is_err());
        assert!(ConePartition::new(2, vec![0], vec![]).is_err());
        assert!(ConePartition::new(2, vec![0], vec![2]).is_err());
        let p = ConePartition::new(3, vec![2, 0], vec![1]).unwrap();
        assert_eq!(p.equality(), &[0, 2]);
    }

    fn partition_and_vectors() -> impl Strategy<Value = (ConePartition, Vec<f64>, Vec<f64>)> {
        (1usize..8).prop_flat_map(|n| {
            (
                prop::collection::vec(any::<bool>(), n),
                prop::collection::vec(-10.0f64..10.0, n),
                prop::collection::vec(-10.0f64..10.0, n),
            )
                .prop_map(move |(kinds, a, b)| {
                    let eq = (0..n).filter(|&i| kinds[i]).collect();
                    let ineq = (0..n).filter(|&i| !kinds[i]).collect();
                    (ConePartition::new(n, eq, ineq).unwrap(), a, b)
                })
        })
    }

    proptest! {
        #[test]
        fn projection_is_idempotent((p, y, _) in partition_and_vectors()) {
            let once = p.project(&y).unwrap();
            prop_assert_eq!(p.project(&once).unwrap(), once.clone());
            prop_assert!(p.contains(&once, 0.0).unwrap());
        }

        #[test]
        fn projection_and_residual_nonexpansive((p, a, b) in partition_and_vectors()) {
            let d = |x: &[f64], y: &[f64]| norm2(&x.iter().zip(y).map(|(u, v)| u - v).collect::<Vec<_>>());
            let ab = d(&a, &b);
            prop_assert!(d(&p.project(&a).unwrap(), &p.project(&b).unwrap()) <= ab + 1e-12);
            prop_assert!(d(&p.residual(&a).unwrap(), &p.residual(&b).unwrap()) <= ab + 1e-12);
        }

        #[test]
        fn residual_lies_in_normal_cone((p, y, _) in partition_and_vectors()) {
            let proj = p.project(&y).unwrap();
            let res = p.residual(&y).unwrap();
            prop_assert!(p.in_normal_cone(&res, &proj, 1e-12).unwrap());
        }

        #[test]
        fn distance_zero_iff_member((p, y, _) in partition_and_vectors()) {
            let d = p.distance(&y).unwrap();
            prop_assert_eq!(d == 0.0, p.contains(&y, 0.0).unwrap());
        }
    }
}
