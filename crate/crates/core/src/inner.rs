//! Randomly stopped mini-batch stochastic gradient loop for a fixed
//! multiplier proxy and penalty.

use serde::{Deserialize, Serialize};

use crate::auglag::{penalty_differential, penalty_term};
use crate::constraints::{check_penalty, ConstraintSystem};
use crate::error::{check_len, Error, Result};
use crate::manifold::{Manifold, ManifoldPoint};
use crate::stochastic::{
    batch_gradient, draw_stopping, BatchEstimate, RngStream, StochasticObjective, StreamPurpose,
};

/// Largest number of step halvings after a rejected retraction.
pub const MAX_STEP_HALVINGS: u32 = 20;

/// Anything that can produce a mini-batch estimate of value and
/// differential at a point.
pub trait BatchObjective: Sync {
    fn dim(&self) -> usize;

    fn estimate(&self, u: &ManifoldPoint, m: usize, stream: &RngStream) -> Result<BatchEstimate>;
}

/// Plain sampled objective.
#[derive(Debug, Clone, Copy)]
pub struct Sampled<'a>(pub &'a dyn StochasticObjective);

impl BatchObjective for Sampled<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn estimate(&self, u: &ManifoldPoint, m: usize, stream: &RngStream) -> Result<BatchEstimate> {
        batch_gradient(self.0, u, m, stream)
    }
}

/// The stochastic augmented Lagrangian `L_A(u, w, xi; mu)` of one outer
/// iteration. The penalty part is deterministic and is added once per batch.
#[derive(Debug, Clone)]
pub struct PenalizedObjective<'a> {
    pub objective: &'a dyn StochasticObjective,
    pub constraints: &'a dyn ConstraintSystem,
    pub w: Vec<f64>,
    pub mu: f64,
}

impl<'a> PenalizedObjective<'a> {
    pub fn new(
        objective: &'a dyn StochasticObjective,
        constraints: &'a dyn ConstraintSystem,
        w: Vec<f64>,
        mu: f64,
    ) -> Result<Self> {
        check_penalty(mu)?;
        check_len("multiplier proxy", constraints.len(), w.len())?;
        Ok(Self {
            objective,
            constraints,
            w,
            mu,
        })
    }
}

impl BatchObjective for PenalizedObjective<'_> {
    fn dim(&self) -> usize {
        self.objective.dim()
    }

    fn estimate(&self, u: &ManifoldPoint, m: usize, stream: &RngStream) -> Result<BatchEstimate> {
        let mut est = batch_gradient(self.objective, u, m, stream)?;
        let h = self.constraints.values(u)?;
        let dh = self.constraints.differentials(u)?;
        let p = self.constraints.partition();
        est.value += penalty_term(&h, &self.w, self.mu, p)?;
        let pen = penalty_differential(&h, &dh, &self.w, self.mu, p, est.differential.len())?;
        for (d, q) in est.differential.iter_mut().zip(pen) {
            *d += q;
        }
        Ok(est)
    }
}

/// Step size `t_k`, iteration limit `N_k` and batch size `m_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerLoopParams {
    pub step_size: f64,
    pub iteration_limit: u64,
    pub batch_size: usize,
    /// Stop early once this many samples have been drawn. Only used to
    /// honour an overall sample budget; `None` runs all `R_k` steps.
    pub max_samples: Option<u64>,
}

impl InnerLoopParams {
    pub fn new(step_size: f64, iteration_limit: u64, batch_size: usize) -> Self {
        Self {
            step_size,
            iteration_limit,
            batch_size,
            max_samples: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Parameter(format!(
                "step size must be positive, got {}",
                self.step_size
            )));
        }
        if self.iteration_limit < 1 || self.batch_size < 1 {
            return Err(Error::Parameter(
                "iteration limit and batch size must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Diagnostics of one stochastic gradient step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub objective_estimate: f64,
    /// `|g|_G` of the batch gradient at the start of the step.
    pub gradient_norm: f64,
    /// `|t g|_G` actually taken, after any halvings.
    pub step_norm: f64,
    pub halvings: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerLoopResult {
    pub u_next: ManifoldPoint,
    pub stopping_index: u64,
    pub steps: Vec<StepRecord>,
    pub samples: u64,
    /// The sample cap ended the loop before `stopping_index` steps.
    pub truncated: bool,
}

/// One step `z+ = R_z(-t g)` with `g` the Riesz representative of the batch
/// mean differential. A rejected retraction halves the step, at most
/// [`MAX_STEP_HALVINGS`] times.
pub fn rsg_step(
    manifold: &dyn Manifold,
    objective: &dyn BatchObjective,
    z: &ManifoldPoint,
    step_size: f64,
    batch_size: usize,
    stream: &RngStream,
) -> Result<(ManifoldPoint, StepRecord)> {
    if !(step_size > 0.0 && step_size.is_finite()) {
        return Err(Error::Parameter(format!(
            "step size must be positive, got {step_size}"
        )));
    }
    let est = objective.estimate(z, batch_size, stream)?;
    let grad = manifold.gradient_from_differential(z, &est.differential)?;
    let gradient_norm = manifold.norm(z, &grad)?;
    if !grad.is_finite() || !gradient_norm.is_finite() || !est.value.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite stochastic gradient at step {:?}",
            stream.path
        )));
    }
    let mut t = step_size;
    for halvings in 0..=MAX_STEP_HALVINGS {
        match manifold.retract(z, &grad.scaled(-t)) {
            Ok(next) => {
                return Ok((
                    next,
                    StepRecord {
                        objective_estimate: est.value,
                        gradient_norm,
                        step_norm: t * gradient_norm,
                        halvings,
                    },
                ))
            }
            Err(Error::StepRejected(_)) => t *= 0.5,
            Err(e) => return Err(e),
        }
    }
    Err(Error::StepRejected(format!(
        "retraction rejected after {MAX_STEP_HALVINGS} halvings"
    )))
}

/// Draws `R_k` uniformly from `1..=N_k` and takes `R_k` steps from `u_k`,
/// returning the last iterate. `stream` addresses outer iteration `k`;
/// step `j` draws its batch from `stream.step(j)`.
pub fn run_inner(
    manifold: &dyn Manifold,
    objective: &dyn BatchObjective,
    u_k: &ManifoldPoint,
    params: &InnerLoopParams,
    stream: &RngStream,
) -> Result<InnerLoopResult> {
    params.validate()?;
    let stopping_index = draw_stopping(
        params.iteration_limit,
        &stream.with_purpose(StreamPurpose::Stopping),
    )?;
    let gradient_stream = stream.with_purpose(StreamPurpose::Gradient);
    let mut z = u_k.clone();
    let mut steps = Vec::with_capacity(stopping_index.min(1 << 16) as usize);
    let mut samples = 0u64;
    let mut truncated = false;
    for j in 1..=stopping_index {
        if let Some(cap) = params.max_samples {
            if samples + params.batch_size as u64 > cap {
                truncated = true;
                break;
            }
        }
        let (next, rec) = rsg_step(
            manifold,
            objective,
            &z,
            params.step_size,
            params.batch_size,
            &gradient_stream.step(j),
        )?;
        samples += params.batch_size as u64;
        steps.push(rec);
        z = next;
    }
    Ok(InnerLoopResult {
        u_next: z,
        stopping_index,
        steps,
        samples,
        truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::Euclidean;
    use crate::stochastic::{ObjectiveSample, SampleRng};
    use rand_distr::{Distribution, StandardNormal};

    /// `J(u, z) = (u - 3)^2 / 2 + sigma z (u - 3)`, L = 1.
    #[derive(Debug)]
    struct Shifted {
        sigma: f64,
    }

    impl StochasticObjective for Shifted {
        fn dim(&self) -> usize {
            1
        }

        fn sample(&self, u: &ManifoldPoint, rng: &mut SampleRng) -> Result<ObjectiveSample> {
            let z: f64 = if self.sigma > 0.0 {
                StandardNormal.sample(rng)
            } else {
                0.0
            };
            let d = u[0] - 3.0;
            Ok(ObjectiveSample {
                value: 0.5 * d * d + self.sigma * z * d,
                differential: vec![d + self.sigma * z],
            })
        }
    }

    #[derive(Debug)]
    struct Broken;

    impl StochasticObjective for Broken {
        fn dim(&self) -> usize {
            1
        }

        fn sample(&self, _u: &ManifoldPoint, _rng: &mut SampleRng) -> Result<ObjectiveSample> {
            Ok(ObjectiveSample {
                value: 0.0,
                differential: vec![f64::NAN],
            })
        }
    }

    #[test]
    fn zero_gradient_leaves_point() {
        let obj = Shifted { sigma: 0.0 };
        let m = Euclidean::new(1);
        let z = ManifoldPoint::new(vec![3.0]);
        let (next, rec) = rsg_step(&m, &Sampled(&obj), &z, 0.7, 4, &RngStream::new(1)).unwrap();
        assert_eq!(next, z);
        assert_eq!(rec.gradient_norm, 0.0);
    }

    #[test]
    fn unit_step_on_unit_quadratic_hits_minimizer() {
        let obj = Shifted { sigma: 0.0 };
        let m = Euclidean::new(1);
        let (next, _) = rsg_step(
            &m,
            &Sampled(&obj),
            &ManifoldPoint::zeros(1),
            1.0,
            1,
            &RngStream::new(1),
        )
        .unwrap();
        assert_eq!(next.as_slice(), &[3.0]);
    }

    #[test]
    fn noisy_step_mean_matches_deterministic_step() {
        let obj = Shifted { sigma: 1.0 };
        let m = Euclidean::new(1);
        let z = ManifoldPoint::new(vec![1.0]);
        let n = 100_000u64;
        let base = RngStream::new(964113).outer(1);
        let xs: Vec<f64> = (0..n)
            .map(|j| {
                rsg_step(&m, &Sampled(&obj), &z, 0.5, 1, &base.step(j))
                    .unwrap()
                    .0[0]
            })
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let expected = 1.0 + 0.5 * (3.0 - 1.0);
        assert!((mean - expected).abs() <= 3.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let m = Euclidean::new(1);
        let err = rsg_step(
            &m,
            &Sampled(&Broken),
            &ManifoldPoint::zeros(1),
            1.0,
            1,
            &RngStream::new(1),
        );
        assert!(matches!(err, Err(Error::Numerical(_))));
    }

    #[test]
    fn single_iteration_limit_takes_one_step() {
        let obj = Shifted { sigma: 1.0 };
        let m = Euclidean::new(1);
        for seed in 0..20 {
            let res = run_inner(
                &m,
                &Sampled(&obj),
                &ManifoldPoint::zeros(1),
                &InnerLoopParams::new(0.5, 1, 3),
                &RngStream::new(seed).outer(1),
            )
            .unwrap();
            assert_eq!(res.stopping_index, 1);
            assert_eq!(res.steps.len(), 1);
            assert_eq!(res.samples, 3);
        }
    }

    #[test]
    fn deterministic_descent_is_monotone() {
        let obj = Shifted { sigma: 0.0 };
        let m = Euclidean::new(1);
        let res = run_inner(
            &m,
            &Sampled(&obj),
            &ManifoldPoint::new(vec![-10.0]),
            &InnerLoopParams::new(0.9, 40, 1),
            &RngStream::new(2).outer(1),
        )
        .unwrap();
        for w in res.steps.windows(2) {
            assert!(w[1].objective_estimate <= w[0].objective_estimate);
        }
    }

    #[test]
    fn inner_loop_is_reproducible() {
        let obj = Shifted { sigma: 2.0 };
        let m = Euclidean::new(1);
        let params = InnerLoopParams::new(0.3, 25, 7);
        let stream = RngStream::new(421507).outer(3);
        let a = run_inner(
            &m,
            &Sampled(&obj),
            &ManifoldPoint::zeros(1),
            &params,
            &stream,
        )
        .unwrap();
        let b = run_inner(
            &m,
            &Sampled(&obj),
            &ManifoldPoint::zeros(1),
            &params,
            &stream,
        )
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.steps.len() as u64, a.stopping_index);
    }

    #[test]
    fn sample_cap_truncates() {
        let obj = Shifted { sigma: 1.0 };
        let m = Euclidean::new(1);
        let mut params = InnerLoopParams::new(0.3, 1, 10);
        params.max_samples = Some(5);
        let res = run_inner(
            &m,
            &Sampled(&obj),
            &ManifoldPoint::zeros(1),
            &params,
            &RngStream::new(1),
        )
        .unwrap();
        assert!(res.truncated);
        assert!(res.steps.is_empty());
        assert_eq!(res.u_next.as_slice(), &[0.0]);
    }

    #[test]
    fn invalid_params_rejected() {
        let obj = Shifted { sigma: 0.0 };
        let m = Euclidean::new(1);
        let z = ManifoldPoint::zeros(1);
        for p in [
            InnerLoopParams::new(0.0, 1, 1),
            InnerLoopParams::new(1.0, 0, 1),
            InnerLoopParams::new(1.0, 1, 0),
        ] {
            assert!(run_inner(&m, &Sampled(&obj), &z, &p, &RngStream::new(1)).is_err());
        }
    }
}
