//! Deterministic constraint systems `h(u) in K`, multiplier updates and
//! the safeguarding box.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cone::ConePartition;
use crate::error::{check_len, Error, Result};
use crate::manifold::ManifoldPoint;

/// A vector constraint `h: M -> R^n` together with its cone.
///
/// `differentials` returns one row per constraint holding the partial
/// derivatives of `h_i` with respect to the chart coordinates of `u`.
pub trait ConstraintSystem: Send + Sync + fmt::Debug {
    fn partition(&self) -> &ConePartition;

    fn values(&self, u: &ManifoldPoint) -> Result<Vec<f64>>;

    fn differentials(&self, u: &ManifoldPoint) -> Result<Vec<Vec<f64>>>;

    fn len(&self) -> usize {
        self.partition().len()
    }

    fn is_empty(&self) -> bool {
        self.partition().is_empty()
    }
}

/// Componentwise interval used to safeguard the multipliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafeguardBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl SafeguardBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_len("safeguard box", lower.len(), upper.len())?;
        if let Some(i) = (0..lower.len()).find(|&i| !(lower[i] <= upper[i])) {
            return Err(Error::Parameter(format!(
                "safeguard box component {i}: lower {} exceeds upper {}",
                lower[i], upper[i]
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn uniform(n: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower; n], vec![upper; n])
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.len()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
    }
}

/// `pi_B(lambda)`: clamps every multiplier into the box.
pub fn safeguard(lambda: &[f64], bx: &SafeguardBox) -> Result<Vec<f64>> {
    check_len("multiplier", bx.len(), lambda.len())?;
    Ok(lambda
        .iter()
        .zip(bx.lower.iter().zip(&bx.upper))
        .map(|(l, (lo, hi))| l.clamp(*lo, *hi))
        .collect())
}

/// Multiplier, safeguarded proxy and penalty parameter of one outer step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplierState {
    pub lambda: Vec<f64>,
    pub w: Vec<f64>,
    pub mu: f64,
}

impl MultiplierState {
    pub fn new(lambda: Vec<f64>, w: Vec<f64>, mu: f64) -> Result<Self> {
        check_len("multiplier proxy", lambda.len(), w.len())?;
        check_penalty(mu)?;
        Ok(Self { lambda, w, mu })
    }
}

pub(crate) fn check_penalty(mu: f64) -> Result<()> {
    if mu > 0.0 && mu.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "penalty parameter must be positive and finite, got {mu}"
        )))
    }
}

/// `grad j + sum_i lambda_i grad h_i`, the gradient of the Lagrangian.
///
/// The combination is linear, so it holds equally for differentials and
/// for Riesz-represented gradients as long as both inputs use the same one.
pub fn lagrangian_gradient(
    j_grad: &[f64],
    constraint_grads: &[Vec<f64>],
    lambda: &[f64],
) -> Result<Vec<f64>> {
    check_len("multiplier", constraint_grads.len(), lambda.len())?;
    let mut out = j_grad.to_vec();
    for (g, l) in constraint_grads.iter().zip(lambda) {
        check_len("constraint gradient", out.len(), g.len())?;
        for (o, gi) in out.iter_mut().zip(g) {
            *o += l * gi;
        }
    }
    Ok(out)
}

/// `mu (v - pi_K(v))` with `v = h + w / mu`, given constraint values.
pub fn multiplier_from_values(
    h: &[f64],
    w: &[f64],
    mu: f64,
    partition: &ConePartition,
) -> Result<Vec<f64>> {
    check_penalty(mu)?;
    check_len("multiplier proxy", h.len(), w.len())?;
    let shifted: Vec<f64> = h.iter().zip(w).map(|(hi, wi)| hi + wi / mu).collect();
    Ok(partition
        .residual(&shifted)?
        .into_iter()
        .map(|r| mu * r)
        .collect())
}

/// First-order multiplier update at the new iterate `u_next`.
pub fn multiplier_update(
    constraints: &dyn ConstraintSystem,
    u_next: &ManifoldPoint,
    state: &MultiplierState,
) -> Result<Vec<f64>> {
    let h = constraints.values(u_next)?;
    multiplier_from_values(&h, &state.w, state.mu, constraints.partition())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lagrangian_gradient_examples() {
        assert_eq!(
            lagrangian_gradient(&[2.0], &[vec![1.0]], &[2.0]).unwrap(),
            vec![4.0]
        );
        assert_eq!(
            lagrangian_gradient(&[1.5, -2.0], &[vec![3.0, 1.0]], &[0.0]).unwrap(),
            vec![1.5, -2.0]
        );
        assert_eq!(
            lagrangian_gradient(&[1.0, 0.0], &[vec![0.0, 1.0], vec![1.0, 1.0]], &[2.0, -1.0])
                .unwrap(),
            vec![0.0, 1.0]
        );
        assert!(lagrangian_gradient(&[1.0], &[vec![1.0]], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn multiplier_update_examples() {
        let ineq = ConePartition::all_inequality(1);
        let eq = ConePartition::all_equality(1);
        let close = |a: Vec<f64>, b: f64| (a[0] - b).abs() < 1e-12;
        assert!(close(
            multiplier_from_values(&[0.1], &[2.0], 10.0, &ineq).unwrap(),
            3.0
        ));
        assert!(close(
            multiplier_from_values(&[-0.5], &[2.0], 10.0, &ineq).unwrap(),
            0.0
        ));
        assert!(close(
            multiplier_from_values(&[0.2], &[-1.0], 10.0, &eq).unwrap(),
            1.0
        ));
        assert!(multiplier_from_values(&[0.2], &[-1.0], 0.0, &eq).is_err());
    }

    #[test]
    fn safeguard_examples() {
        let b1 = SafeguardBox::uniform(1, -100.0, 100.0).unwrap();
        assert_eq!(safeguard(&[50.0], &b1).unwrap(), vec![50.0]);
        assert_eq!(safeguard(&[250.0], &b1).unwrap(), vec![100.0]);
        let b2 = SafeguardBox::uniform(2, -100.0, 100.0).unwrap();
        assert_eq!(safeguard(&[-101.0, 3.0], &b2).unwrap(), vec![-100.0, 3.0]);
        assert!(SafeguardBox::new(vec![1.0], vec![0.0]).is_err());
        assert!(SafeguardBox::new(vec![f64::NAN], vec![0.0]).is_err());
    }

    proptest! {
        #[test]
        fn safeguard_lands_in_box(
            data in prop::collection::vec((-1e3f64..1e3, -200.0f64..0.0, 0.0f64..200.0), 1..8),
        ) {
            let b = SafeguardBox::new(
                data.iter().map(|d| d.1).collect(),
                data.iter().map(|d| d.2).collect(),
            )
            .unwrap();
            let lambda: Vec<f64> = data.iter().map(|d| d.0).collect();
            let w = safeguard(&lambda, &b).unwrap();
            prop_assert!(b.contains(&w));
            for (i, (wi, li)) in w.iter().zip(&lambda).enumerate() {
                let (lo, hi) = (b.lower()[i], b.upper()[i]);
                let expect = if *li < lo { lo } else if *li > hi { hi } else { *li };
                prop_assert_eq!(*wi, expect);
            }
        }

        #[test]
        fn updated_multiplier_is_dual_feasible(
            data in prop::collection::vec((-5.0f64..5.0, -100.0f64..100.0, any::<bool>()), 1..6),
            mu in 1e-3f64..1e4,
        ) {
            let n = data.len();
            let eq: Vec<usize> = (0..n).filter(|&i| data[i].2).collect();
            let ineq: Vec<usize> = (0..n).filter(|&i| !data[i].2).collect();
            let p = ConePartition::new(n, eq, ineq.clone()).unwrap();
            let h: Vec<f64> = data.iter().map(|d| d.0).collect();
            let w: Vec<f64> = data.iter().map(|d| d.1).collect();
            let lambda = multiplier_from_values(&h, &w, mu, &p).unwrap();
            for &i in &ineq {
                prop_assert!(lambda[i] >= 0.0);
            }
            let v: Vec<f64> = h.iter().zip(&w).map(|(a, b)| a + b / mu).collect();
            let proj = p.project(&v).unwrap();
            prop_assert!(p.in_normal_cone(&lambda, &proj, 1e-12).unwrap());
        }
    }
}
