//! KKT and AKKT residuals, gradient and identity checks, the inner-loop
//! efficiency bound and empirical convergence rates.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::auglag::auglag_gradient;
use crate::cone::{norm2, ConePartition};
use crate::constraints::{lagrangian_gradient, ConstraintSystem};
use crate::error::{check_len, Error, Result};
use crate::manifold::{Manifold, ManifoldPoint, TangentVector};
use crate::outer::IterateSnapshot;
use crate::problems::ProblemDefinition;
use crate::stochastic::{RngStream, StochasticObjective, StreamPurpose};

/// Residuals of the KKT system at `(u, lambda)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// `|grad j + grad h^T lambda|_G`.
    pub stationarity_norm: f64,
    /// `dist_K(h(u))`.
    pub feasibility_norm: f64,
    /// `max |lambda_i h_i|` over inequalities.
    pub complementarity_max: f64,
    /// `max(0, -lambda_i)` over inequalities.
    pub dual_violation_max: f64,
}

impl KktReport {
    pub fn is_kkt(&self, tol: f64) -> bool {
        self.stationarity_norm <= tol
            && self.feasibility_norm <= tol
            && self.complementarity_max <= tol
            && self.dual_violation_max <= tol
    }
}

fn exact_differential(problem: &ProblemDefinition, u: &ManifoldPoint) -> Result<Vec<f64>> {
    problem
        .objective
        .expected(u)
        .ok_or_else(|| {
            Error::Parameter(format!("`{}` has no closed-form objective", problem.name))
        })?
        .map(|s| s.differential)
}

/// KKT residuals given the differential of `j` at `u`.
pub fn kkt_report(
    manifold: &dyn Manifold,
    j_differential: &[f64],
    constraints: &dyn ConstraintSystem,
    u: &ManifoldPoint,
    lambda: &[f64],
) -> Result<KktReport> {
    let h = constraints.values(u)?;
    check_len("multiplier", h.len(), lambda.len())?;
    let dh = constraints.differentials(u)?;
    let dl = lagrangian_gradient(j_differential, &dh, lambda)?;
    let grad = manifold.gradient_from_differential(u, &dl)?;
    let p = constraints.partition();
    let mut complementarity_max: f64 = 0.0;
    let mut dual_violation_max: f64 = 0.0;
    for &i in p.inequality() {
        complementarity_max = complementarity_max.max((lambda[i] * h[i]).abs());
        if -lambda[i] > dual_violation_max {
            dual_violation_max = -lambda[i];
        }
    }
    Ok(KktReport {
        stationarity_norm: manifold.norm(u, &grad)?,
        feasibility_norm: p.distance(&h)?,
        complementarity_max,
        dual_violation_max,
    })
}

/// KKT residuals with the closed-form objective gradient.
pub fn kkt_check(
    problem: &ProblemDefinition,
    u: &ManifoldPoint,
    lambda: &[f64],
) -> Result<KktReport> {
    let dj = exact_differential(problem, u)?;
    kkt_report(
        problem.manifold.as_ref(),
        &dj,
        problem.constraints.as_ref(),
        u,
        lambda,
    )
}

/// Approximate KKT residuals of one iterate pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AkktResidual {
    pub k: u64,
    /// `|grad j + grad h^T lambda|_G`.
    pub stationarity: f64,
    /// `|pi_K(-h)^T lambda|`.
    pub complementarity: f64,
    /// `max(0, -lambda_i)` over inequalities, reported separately.
    pub dual_violation: f64,
}

pub fn akkt_residuals(
    problem: &ProblemDefinition,
    trajectory: &[IterateSnapshot],
) -> Result<Vec<AkktResidual>> {
    if trajectory.is_empty() {
        return Err(Error::Parameter(
            "AKKT residuals need at least one iterate".into(),
        ));
    }
    let manifold = problem.manifold.as_ref();
    let constraints = problem.constraints.as_ref();
    let p = constraints.partition();
    trajectory
        .iter()
        .map(|s| {
            let u = &s.u_next;
            let lambda = &s.lambda_next;
            let dj = exact_differential(problem, u)?;
            let h = constraints.values(u)?;
            check_len("multiplier", h.len(), lambda.len())?;
            let dh = constraints.differentials(u)?;
            let grad =
                manifold.gradient_from_differential(u, &lagrangian_gradient(&dj, &dh, lambda)?)?;
            let neg: Vec<f64> = h.iter().map(|x| -x).collect();
            let proj = p.project(&neg)?;
            let comp: f64 = proj.iter().zip(lambda).map(|(a, l)| a * l).sum();
            let dual = p
                .inequality()
                .iter()
                .map(|&i| -lambda[i])
                .fold(0.0, |m: f64, x| if x > m { x } else { m });
            Ok(AkktResidual {
                k: s.k,
                stationarity: manifold.norm(u, &grad)?,
                complementarity: comp.abs(),
                dual_violation: dual,
            })
        })
        .collect()
}

/// `|grad_u L_A(u^{k+1}, w^k; mu_k) - grad_u L(u^{k+1}, lambda^{k+1})|`
/// in chart coordinates. The objective part cancels, so any differential
/// of `j` may be passed.
pub fn multiplier_identity_gap(
    j_differential: &[f64],
    constraints: &dyn ConstraintSystem,
    snapshot: &IterateSnapshot,
) -> Result<f64> {
    let u = &snapshot.u_next;
    let a = auglag_gradient(j_differential, constraints, u, &snapshot.w, snapshot.mu)?;
    let dh = constraints.differentials(u)?;
    let b = lagrangian_gradient(j_differential, &dh, &snapshot.lambda_next)?;
    Ok(norm2(
        &a.iter().zip(&b).map(|(x, y)| x - y).collect::<Vec<_>>(),
    ))
}

/// Right-hand side of the inner-loop efficiency estimate,
/// `2 L gap / ((2 alpha - alpha^2) N) + alpha M^2 / ((2 - alpha) m)`.
pub fn efficiency_bound(
    lipschitz: f64,
    gap: f64,
    alpha: f64,
    iteration_limit: u64,
    noise_second_moment: f64,
    batch_size: usize,
) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::Parameter(format!(
            "alpha must lie in (0, 2), got {alpha}"
        )));
    }
    if !(lipschitz > 0.0) || !(gap >= 0.0) || !(noise_second_moment >= 0.0) {
        return Err(Error::Parameter(
            "efficiency bound needs L > 0, gap >= 0 and M^2 >= 0".into(),
        ));
    }
    if iteration_limit == 0 || batch_size == 0 {
        return Err(Error::Parameter("N and m must be positive".into()));
    }
    Ok(
        2.0 * lipschitz * gap / ((2.0 * alpha - alpha * alpha) * iteration_limit as f64)
            + alpha * noise_second_moment / ((2.0 - alpha) * batch_size as f64),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub runs: usize,
    pub empirical_mean: f64,
    pub bound: f64,
    /// `bound * (1 + 3 / sqrt(runs))`.
    pub threshold: f64,
    pub pass: bool,
}

/// Compares the mean of `|grad f(u^{k+1})|^2` over repeated inner loops
/// with the efficiency bound.
pub fn efficiency_bound_check(
    squared_gradient_norms: &[f64],
    lipschitz: f64,
    gap: f64,
    alpha: f64,
    iteration_limit: u64,
    noise_second_moment: f64,
    batch_size: usize,
) -> Result<EfficiencyReport> {
    let runs = squared_gradient_norms.len();
    if runs == 0 {
        return Err(Error::Parameter(
            "efficiency check needs at least one run".into(),
        ));
    }
    let bound = efficiency_bound(
        lipschitz,
        gap,
        alpha,
        iteration_limit,
        noise_second_moment,
        batch_size,
    )?;
    let empirical_mean = squared_gradient_norms.iter().sum::<f64>() / runs as f64;
    let threshold = bound * (1.0 + 3.0 / (runs as f64).sqrt());
    Ok(EfficiencyReport {
        runs,
        empirical_mean,
        bound,
        threshold,
        pass: empirical_mean <= threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum RateClass {
    Sublinear,
    Linear {
        ratio: f64,
    },
    Superlinear,
    /// A residual in the window was not positive.
    Undefined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    /// Median of `r_{k+1} / r_k` over the trailing window.
    pub ratio: f64,
    pub class: RateClass,
}

/// Classifies the trailing `window` residuals: superlinear when every
/// successive ratio is at most 90% of the previous one, linear when all
/// ratios lie within 10% of their median and that band stays below 1,
/// sublinear otherwise.
pub fn estimate_rate(residuals: &[f64], window: usize) -> Result<RateEstimate> {
    if window < 3 {
        return Err(Error::Parameter(format!(
            "rate window must be at least 3, got {window}"
        )));
    }
    if residuals.len() < window {
        return Err(Error::Parameter(format!(
            "rate window {window} exceeds the {} residuals",
            residuals.len()
        )));
    }
    let tail = &residuals[residuals.len() - window..];
    if tail.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Ok(RateEstimate {
            ratio: f64::NAN,
            class: RateClass::Undefined,
        });
    }
    let ratios: Vec<f64> = tail.windows(2).map(|w| w[1] / w[0]).collect();
    let mut sorted = ratios.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let ratio = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    let class = if ratios.windows(2).all(|w| w[1] <= 0.9 * w[0]) {
        RateClass::Superlinear
    } else if ratios.iter().all(|q| (q - ratio).abs() <= 0.1 * ratio) && 1.1 * ratio < 1.0 {
        RateClass::Linear { ratio }
    } else {
        RateClass::Sublinear
    };
    Ok(RateEstimate { ratio, class })
}

/// Largest central-difference mismatch found by [`gradient_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub points: usize,
    /// `|fd - g|_inf / max(|g|_inf, 1)` maximized over points and functions.
    pub max_relative_error: f64,
    /// Function with the largest error: `objective` or `constraint i`.
    pub worst: String,
    pub pass: bool,
}

fn central_difference(
    f: &dyn Fn(&ManifoldPoint) -> Result<f64>,
    u: &ManifoldPoint,
    step: f64,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(u.len());
    let mut x = u.clone();
    for i in 0..u.len() {
        let h = step * u[i].abs().max(1.0);
        x.as_mut_slice()[i] = u[i] + h;
        let fp = f(&x)?;
        x.as_mut_slice()[i] = u[i] - h;
        let fm = f(&x)?;
        x.as_mut_slice()[i] = u[i];
        out.push((fp - fm) / (2.0 * h));
    }
    Ok(out)
}

fn relative_error(fd: &[f64], g: &[f64]) -> f64 {
    let scale = g.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    fd.iter()
        .zip(g)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / scale
}

/// Compares per-sample objective differentials and constraint
/// differentials with central differences at `points` random perturbations
/// of the initial point. The same random draw is used for all evaluations
/// of one sample.
pub fn gradient_check(
    problem: &ProblemDefinition,
    points: usize,
    perturbation: f64,
    seed: u64,
    tol: f64,
) -> Result<GradientCheck> {
    let stream = RngStream::new(seed).with_purpose(StreamPurpose::Diagnostic);
    let objective: &dyn StochasticObjective = problem.objective.as_ref();
    let constraints = problem.constraints.as_ref();
    let mut worst = (0.0f64, String::from("objective"));
    for s in 0..points {
        let mut rng = stream.outer(s as u64).rng();
        let mut u = problem.initial_point.clone();
        for x in u.as_mut_slice() {
            *x += perturbation * (rng.random::<f64>() - 0.5);
        }
        problem.manifold.check_point(&u)?;
        let sample_stream = stream.outer(s as u64).step(1);
        let sample = objective.sample(&u, &mut sample_stream.rng())?;
        let f = |x: &ManifoldPoint| {
            objective
                .sample(x, &mut sample_stream.rng())
                .map(|v| v.value)
        };
        let fd = central_difference(&f, &u, 1e-6)?;
        let e = relative_error(&fd, &sample.differential);
        if e > worst.0 {
            worst = (e, "objective".into());
        }
        let dh = constraints.differentials(&u)?;
        for (i, row) in dh.iter().enumerate() {
            let f = |x: &ManifoldPoint| constraints.values(x).map(|h| h[i]);
            let fd = central_difference(&f, &u, 1e-6)?;
            let e = relative_error(&fd, row);
            if e > worst.0 {
                worst = (e, format!("constraint {i}"));
            }
        }
    }
    Ok(GradientCheck {
        points,
        max_relative_error: worst.0,
        worst: worst.1,
        pass: worst.0 <= tol,
    })
}

/// Counts of failed cone properties over random inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConeCheck {
    pub samples: usize,
    pub idempotence_failures: usize,
    pub nonexpansive_failures: usize,
    pub normal_cone_failures: usize,
}

impl ConeCheck {
    pub fn pass(&self) -> bool {
        self.idempotence_failures == 0
            && self.nonexpansive_failures == 0
            && self.normal_cone_failures == 0
    }
}

/// Projection idempotence, nonexpansiveness and `y - pi_K(y)` lying in the
/// normal cone at `pi_K(y)`, on random vectors with entries in `[-10, 10]`.
pub fn cone_check(partition: &ConePartition, samples: usize, seed: u64) -> Result<ConeCheck> {
    let stream = RngStream::new(seed).with_purpose(StreamPurpose::Diagnostic);
    let n = partition.len();
    let mut out = ConeCheck {
        samples,
        idempotence_failures: 0,
        nonexpansive_failures: 0,
        normal_cone_failures: 0,
    };
    for s in 0..samples {
        let mut rng = stream.sample(s as u64).rng();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let z: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let py = partition.project(&y)?;
        let pz = partition.project(&z)?;
        if partition.project(&py)? != py {
            out.idempotence_failures += 1;
        }
        let dp: Vec<f64> = py.iter().zip(&pz).map(|(a, b)| a - b).collect();
        let dy: Vec<f64> = y.iter().zip(&z).map(|(a, b)| a - b).collect();
        if norm2(&dp) > norm2(&dy) * (1.0 + 1e-12) {
            out.nonexpansive_failures += 1;
        }
        if !partition.in_normal_cone(&partition.residual(&y)?, &py, 1e-12)? {
            out.normal_cone_failures += 1;
        }
    }
    Ok(out)
}

/// Norm of a chart vector in the metric at `u`.
pub fn metric_norm(manifold: &dyn Manifold, u: &ManifoldPoint, v: &[f64]) -> Result<f64> {
    manifold.norm(u, &TangentVector::new(v.to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{multishape_benchmark, quadratic_benchmark};
    use crate::stochastic::KlField;

    #[test]
    fn kkt_examples() {
        let p = quadratic_benchmark(1, 0.0).unwrap();
        let r = kkt_check(&p, &ManifoldPoint::new(vec![1.0]), &[2.0]).unwrap();
        assert!(r.is_kkt(1e-12));
        let r = kkt_check(&p, &ManifoldPoint::new(vec![1.0]), &[-1.0]).unwrap();
        assert_eq!(r.dual_violation_max, 1.0);
        let r = kkt_check(&p, &ManifoldPoint::new(vec![0.5]), &[0.0]).unwrap();
        assert_eq!(r.feasibility_norm, 0.5);
        assert!(!r.is_kkt(1e-3));
    }

    #[test]
    fn known_solutions_pass_kkt() {
        for dim in 1..5 {
            let p = quadratic_benchmark(dim, 0.1).unwrap();
            let k = p.known_solution.clone().unwrap();
            assert!(kkt_check(&p, &k.point, &k.multiplier).unwrap().is_kkt(1e-8));
        }
    }

    fn snapshot(u: Vec<f64>, lambda: Vec<f64>) -> IterateSnapshot {
        IterateSnapshot {
            k: 1,
            w: lambda.clone(),
            mu: 10.0,
            u_next: ManifoldPoint::new(u),
            lambda_next: lambda,
        }
    }

    #[test]
    fn akkt_examples() {
        let p = quadratic_benchmark(3, 0.0).unwrap();
        let at_kkt = vec![snapshot(vec![1.0, 1.0, 0.0], vec![2.0, 2.0]); 3];
        for r in akkt_residuals(&p, &at_kkt).unwrap() {
            assert!(r.stationarity.abs() < 1e-15 && r.complementarity == 0.0);
        }
        let feasible = vec![
            snapshot(vec![1.5, 2.0, 0.3], vec![0.0, 0.0]),
            snapshot(vec![1.2, 1.1, -0.3], vec![0.0, 0.0]),
        ];
        for r in akkt_residuals(&p, &feasible).unwrap() {
            assert_eq!(r.complementarity, 0.0);
        }
        assert!(akkt_residuals(&p, &[]).is_err());
    }

    #[test]
    fn efficiency_bound_formula() {
        let b = efficiency_bound(1.0, 4.5, 1.0, 50, 0.01, 10).unwrap();
        assert!((b - (2.0 * 4.5 / 50.0 + 0.01 / 10.0)).abs() < 1e-15);
        let b1 = efficiency_bound(1.0, 0.0, 1.0, 50, 1.0, 10).unwrap();
        let b4 = efficiency_bound(1.0, 0.0, 1.0, 50, 1.0, 40).unwrap();
        assert!((b1 / b4 - 4.0).abs() < 1e-12);
        assert!(efficiency_bound(1.0, 1.0, 2.0, 50, 1.0, 10).is_err());
        let rep = efficiency_bound_check(&[0.0; 4], 1.0, 1.0, 1.0, 10, 0.0, 1).unwrap();
        assert!(rep.pass);
        assert!((rep.threshold - rep.bound * 2.5).abs() < 1e-15);
    }

    #[test]
    fn rate_examples() {
        let geo: Vec<f64> = (1..=12).map(|k| 0.5f64.powi(k)).collect();
        let r = estimate_rate(&geo, 6).unwrap();
        assert_eq!(r.class, RateClass::Linear { ratio: 0.5 });
        let sup: Vec<f64> = (1..=6).map(|k| 2f64.powi(-(k * k))).collect();
        assert_eq!(
            estimate_rate(&sup, 5).unwrap().class,
            RateClass::Superlinear
        );
        let sub: Vec<f64> = (1..=30).map(|k| 1.0 / k as f64).collect();
        assert_eq!(estimate_rate(&sub, 6).unwrap().class, RateClass::Sublinear);
        assert_eq!(
            estimate_rate(&[1.0, 0.0, 0.5], 3).unwrap().class,
            RateClass::Undefined
        );
        assert!(estimate_rate(&geo, 2).is_err());
    }

    #[test]
    fn gradient_check_passes_on_benchmarks() {
        let q = quadratic_benchmark(3, 0.3).unwrap();
        let c = gradient_check(&q, 20, 0.5, 5, 1e-6).unwrap();
        assert!(c.pass, "{c:?}");
        let m = multishape_benchmark(3, 16, KlField::default()).unwrap();
        let c = gradient_check(&m, 20, 1e-3, 5, 1e-6).unwrap();
        assert!(c.pass, "{c:?}");
    }

    #[test]
    fn cone_check_passes() {
        let p = ConePartition::new(6, vec![0, 3], vec![1, 2, 4, 5]).unwrap();
        assert!(cone_check(&p, 500, 3).unwrap().pass());
    }
}
