use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};

use super::{KnownSolution, ProblemDefinition};
use crate::cone::ConePartition;
use crate::constraints::{ConstraintSystem, SafeguardBox};
use crate::error::{check_len, Error, Result};
use crate::manifold::{Euclidean, ManifoldPoint};
use crate::outer::{AlParams, ScheduleParams, SolverConfig, StepRule, Termination};
use crate::stochastic::{ObjectiveSample, SampleRng, StochasticObjective};

/// `J(u, z) = (L/2)|u - c|^2 + sigma z.(u - c)` with `z` standard normal,
/// so `j(u) = (L/2)|u - c|^2` and the gradient noise has covariance
/// `sigma^2 I`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyQuadratic {
    pub curvature: f64,
    pub center: Vec<f64>,
    pub sigma: f64,
}

impl NoisyQuadratic {
    pub fn new(curvature: f64, center: Vec<f64>, sigma: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::Parameter(
                "quadratic needs dimension at least 1".into(),
            ));
        }
        if !(curvature > 0.0 && curvature.is_finite()) {
            return Err(Error::Parameter(format!(
                "curvature must be positive, got {curvature}"
            )));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::Parameter(format!(
                "noise level must be nonnegative, got {sigma}"
            )));
        }
        Ok(Self {
            curvature,
            center,
            sigma,
        })
    }

    /// Second moment bound `M^2 = dim * sigma^2` of the gradient noise.
    pub fn noise_second_moment(&self) -> f64 {
        self.center.len() as f64 * self.sigma * self.sigma
    }

    fn deterministic(&self, u: &ManifoldPoint) -> Result<(f64, Vec<f64>)> {
        check_len("quadratic point", self.center.len(), u.len())?;
        let d: Vec<f64> = u.iter().zip(&self.center).map(|(a, c)| a - c).collect();
        let value = 0.5 * self.curvature * d.iter().map(|x| x * x).sum::<f64>();
        Ok((value, d))
    }
}

impl StochasticObjective for NoisyQuadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn sample(&self, u: &ManifoldPoint, rng: &mut SampleRng) -> Result<ObjectiveSample> {
        let (mut value, d) = self.deterministic(u)?;
        let mut differential = Vec::with_capacity(d.len());
        for di in d {
            let mut g = self.curvature * di;
            if self.sigma > 0.0 {
                let z: f64 = StandardNormal.sample(rng);
                value += self.sigma * z * di;
                g += self.sigma * z;
            }
            differential.push(g);
        }
        Ok(ObjectiveSample {
            value,
            differential,
        })
    }

    fn expected(&self, u: &ManifoldPoint) -> Option<Result<ObjectiveSample>> {
        Some(self.deterministic(u).map(|(value, d)| ObjectiveSample {
            value,
            differential: d.into_iter().map(|x| self.curvature * x).collect(),
        }))
    }
}

/// Inequalities `b_i - u_{k_i} <= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerBounds {
    dim: usize,
    bounds: Vec<(usize, f64)>,
    partition: ConePartition,
}

impl LowerBounds {
    pub fn new(dim: usize, bounds: Vec<(usize, f64)>) -> Result<Self> {
        if let Some(&(k, _)) = bounds.iter().find(|(k, _)| *k >= dim) {
            return Err(Error::Parameter(format!(
                "bound on coordinate {k} of a {dim}-dimensional point"
            )));
        }
        let partition = ConePartition::all_inequality(bounds.len());
        Ok(Self {
            dim,
            bounds,
            partition,
        })
    }
}

impl ConstraintSystem for LowerBounds {
    fn partition(&self) -> &ConePartition {
        &self.partition
    }

    fn values(&self, u: &ManifoldPoint) -> Result<Vec<f64>> {
        check_len("bounded point", self.dim, u.len())?;
        Ok(self.bounds.iter().map(|&(k, b)| b - u[k]).collect())
    }

    fn differentials(&self, u: &ManifoldPoint) -> Result<Vec<Vec<f64>>> {
        check_len("bounded point", self.dim, u.len())?;
        Ok(self
            .bounds
            .iter()
            .map(|&(k, _)| {
                let mut row = vec![0.0; self.dim];
                row[k] = -1.0;
                row
            })
            .collect())
    }
}

fn default_config(n: usize, step: StepRule) -> Result<SolverConfig> {
    Ok(SolverConfig {
        al: AlParams {
            gamma: 10.0,
            tau: 0.9,
            safeguard: SafeguardBox::uniform(n, -100.0, 100.0)?,
            mu_init: 10.0,
            lambda_init: None,
        },
        schedule: ScheduleParams::default(),
        step,
        termination: Termination::default(),
    })
}

/// `min |u|^2` subject to `1 - u_i <= 0` for the first `min(dim, 2)`
/// coordinates, with Gaussian gradient noise of level `sigma`.
///
/// The KKT point is `u = (1, 1, 0, ...)` with multipliers `2`. The default
/// step is `1 / (2 + mu)`, the inverse Lipschitz constant of the penalized
/// gradient.
pub fn quadratic_benchmark(dim: usize, sigma: f64) -> Result<ProblemDefinition> {
    if dim == 0 {
        return Err(Error::Parameter(
            "quadratic benchmark needs dim >= 1".into(),
        ));
    }
    let objective = NoisyQuadratic::new(2.0, vec![0.0; dim], sigma)?;
    let n = dim.min(2);
    let constraints = LowerBounds::new(dim, (0..n).map(|i| (i, 1.0)).collect())?;
    let mut point = vec![0.0; dim];
    point[..n].fill(1.0);
    let problem = ProblemDefinition {
        name: "quadratic".into(),
        manifold: Arc::new(Euclidean::new(dim)),
        objective: Arc::new(objective),
        constraints: Arc::new(constraints),
        initial_point: ManifoldPoint::zeros(dim),
        known_solution: Some(KnownSolution {
            point: ManifoldPoint::new(point),
            multiplier: vec![2.0; n],
        }),
        config: default_config(
            n,
            StepRule::Lipschitz {
                alpha: 1.0,
                base: 2.0,
                per_mu: 1.0,
            },
        )?,
        shapes: None,
    };
    problem.validate()?;
    Ok(problem)
}

/// Unconstrained `j(u) = (1/2)|u - center|^2` with noise level `sigma`,
/// started at the origin: `L = 1`, `f* = 0`.
pub fn shifted_quadratic(center: Vec<f64>, sigma: f64) -> Result<ProblemDefinition> {
    let dim = center.len();
    let objective = NoisyQuadratic::new(1.0, center.clone(), sigma)?;
    let problem = ProblemDefinition {
        name: "shifted_quadratic".into(),
        manifold: Arc::new(Euclidean::new(dim)),
        objective: Arc::new(objective),
        constraints: Arc::new(LowerBounds::new(dim, Vec::new())?),
        initial_point: ManifoldPoint::zeros(dim),
        known_solution: Some(KnownSolution {
            point: ManifoldPoint::new(center),
            multiplier: Vec::new(),
        }),
        config: default_config(0, StepRule::Constant { step: 1.0 })?,
        shapes: None,
    };
    problem.validate()?;
    Ok(problem)
}
