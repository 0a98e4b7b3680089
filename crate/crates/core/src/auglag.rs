//! Augmented Lagrangian values and gradients with the slack variable
//! eliminated, plus the feasibility and optimality measures driving the
//! outer loop.

use crate::cone::{norm2, ConePartition};
use crate::constraints::{
    check_penalty, lagrangian_gradient, multiplier_from_values, ConstraintSystem,
};
use crate::error::{check_len, Result};
use crate::manifold::{Manifold, ManifoldPoint, TangentVector};

/// Value and gradient of the augmented Lagrangian at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct AugLagEvaluation {
    pub value: f64,
    pub gradient: TangentVector,
}

/// `(mu/2) dist_K(h + lambda/mu)^2 - |lambda|^2 / (2 mu)`.
pub fn penalty_term(h: &[f64], lambda: &[f64], mu: f64, partition: &ConePartition) -> Result<f64> {
    check_penalty(mu)?;
    check_len("multiplier", h.len(), lambda.len())?;
    let shifted: Vec<f64> = h.iter().zip(lambda).map(|(a, l)| a + l / mu).collect();
    let dist = partition.distance(&shifted)?;
    let lambda_sq: f64 = lambda.iter().map(|l| l * l).sum();
    Ok(0.5 * mu * dist * dist - lambda_sq / (2.0 * mu))
}

pub fn auglag_value(
    j_val: f64,
    h: &[f64],
    lambda: &[f64],
    mu: f64,
    partition: &ConePartition,
) -> Result<f64> {
    Ok(j_val + penalty_term(h, lambda, mu, partition)?)
}

/// Per-sample value `J(u, xi) + penalty`; identical algebra to
/// [`auglag_value`] with a sampled objective.
pub fn stochastic_auglag_value(
    j_sample: f64,
    h: &[f64],
    lambda: &[f64],
    mu: f64,
    partition: &ConePartition,
) -> Result<f64> {
    auglag_value(j_sample, h, lambda, mu, partition)
}

/// Penalty contribution to the differential:
/// `mu * sum_i dh_i (v_i - pi_K(v)_i)`, `v = h + w/mu`.
pub fn penalty_differential(
    h: &[f64],
    h_diffs: &[Vec<f64>],
    w: &[f64],
    mu: f64,
    partition: &ConePartition,
    dim: usize,
) -> Result<Vec<f64>> {
    check_penalty(mu)?;
    check_len("constraint differentials", h.len(), h_diffs.len())?;
    check_len("multiplier proxy", h.len(), w.len())?;
    let shifted: Vec<f64> = h.iter().zip(w).map(|(a, l)| a + l / mu).collect();
    let residual = partition.residual(&shifted)?;
    let mut out = vec![0.0; dim];
    for (row, r) in h_diffs.iter().zip(&residual) {
        check_len("constraint differential", dim, row.len())?;
        if *r == 0.0 {
            continue;
        }
        let scale = mu * r;
        for (o, g) in out.iter_mut().zip(row) {
            *o += scale * g;
        }
    }
    Ok(out)
}

/// `grad j + mu grad h^T (h + w/mu - pi_K(h + w/mu))`.
///
/// `j_grad` and the constraint differentials are combined in chart
/// coordinates; pass a differential and convert the result with
/// [`Manifold::gradient_from_differential`] on curved instances.
pub fn auglag_gradient(
    j_grad: &[f64],
    constraints: &dyn ConstraintSystem,
    u: &ManifoldPoint,
    w: &[f64],
    mu: f64,
) -> Result<Vec<f64>> {
    let h = constraints.values(u)?;
    let dh = constraints.differentials(u)?;
    let pen = penalty_differential(&h, &dh, w, mu, constraints.partition(), j_grad.len())?;
    Ok(j_grad.iter().zip(pen).map(|(a, b)| a + b).collect())
}

/// Feasibility measure `H(u, w; mu) = |h(u) - pi_K(h(u) + w/mu)|`.
pub fn feasibility_h(
    constraints: &dyn ConstraintSystem,
    u: &ManifoldPoint,
    w: &[f64],
    mu: f64,
) -> Result<f64> {
    let h = constraints.values(u)?;
    feasibility_from_values(&h, w, mu, constraints.partition())
}

pub fn feasibility_from_values(
    h: &[f64],
    w: &[f64],
    mu: f64,
    partition: &ConePartition,
) -> Result<f64> {
    check_penalty(mu)?;
    check_len("multiplier proxy", h.len(), w.len())?;
    let shifted: Vec<f64> = h.iter().zip(w).map(|(a, l)| a + l / mu).collect();
    let proj = partition.project(&shifted)?;
    Ok(norm2(
        &h.iter().zip(&proj).map(|(a, p)| a - p).collect::<Vec<_>>(),
    ))
}

/// Optimality measure `r(u, lambda) = |grad_u L|_G + |h - pi_K(h + lambda)|`.
///
/// `j_differential` is the differential of `j` at `u`; the stationarity
/// norm is taken in the metric of `manifold`.
pub fn optimality_r(
    manifold: &dyn Manifold,
    j_differential: &[f64],
    constraints: &dyn ConstraintSystem,
    u: &ManifoldPoint,
    lambda: &[f64],
) -> Result<f64> {
    let h = constraints.values(u)?;
    let dh = constraints.differentials(u)?;
    let dl = lagrangian_gradient(j_differential, &dh, lambda)?;
    let grad = manifold.gradient_from_differential(u, &dl)?;
    let stationarity = manifold.norm(u, &grad)?;
    check_len("multiplier", h.len(), lambda.len())?;
    let shifted: Vec<f64> = h.iter().zip(lambda).map(|(a, l)| a + l).collect();
    let proj = constraints.partition().project(&shifted)?;
    let comp = norm2(&h.iter().zip(&proj).map(|(a, p)| a - p).collect::<Vec<_>>());
    Ok(stationarity + comp)
}

/// The multiplier the outer loop would produce at `u` from `(w, mu)`.
pub fn updated_multiplier(
    constraints: &dyn ConstraintSystem,
    u: &ManifoldPoint,
    w: &[f64],
    mu: f64,
) -> Result<Vec<f64>> {
    let h = constraints.values(u)?;
    multiplier_from_values(&h, w, mu, constraints.partition())
}
