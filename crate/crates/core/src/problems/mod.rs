//! Shipped benchmark problems.

mod multishape;
mod quadratic;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use multishape::{
    multishape_benchmark, multishape_problem, MultiShapeParams, ShapeConstraints, TrackingObjective,
};
pub use quadratic::{quadratic_benchmark, shifted_quadratic, LowerBounds, NoisyQuadratic};

use crate::auglag::optimality_r;
use crate::constraints::ConstraintSystem;
use crate::error::{check_len, Error, Result};
use crate::manifold::{Manifold, ManifoldPoint};
use crate::outer::SolverConfig;
use crate::shapes::PolygonCurve;
use crate::stochastic::StochasticObjective;

/// A KKT pair known in closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct KnownSolution {
    pub point: ManifoldPoint,
    pub multiplier: Vec<f64>,
}

/// How a point splits into curves, for writing snapshot files.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeLayout {
    pub count: usize,
    pub nodes: usize,
    /// Expected target curves.
    pub targets: Vec<PolygonCurve>,
}

impl ShapeLayout {
    pub fn curves(&self, u: &[f64]) -> Result<Vec<PolygonCurve>> {
        check_len("shape point", 2 * self.count * self.nodes, u.len())?;
        u.chunks_exact(2 * self.nodes)
            .map(PolygonCurve::from_coords)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct ProblemDefinition {
    pub name: String,
    pub manifold: Arc<dyn Manifold>,
    pub objective: Arc<dyn StochasticObjective>,
    pub constraints: Arc<dyn ConstraintSystem>,
    pub initial_point: ManifoldPoint,
    pub known_solution: Option<KnownSolution>,
    pub config: SolverConfig,
    pub shapes: Option<ShapeLayout>,
}

/// Tolerance on `r` at a stored known solution.
pub const KNOWN_SOLUTION_TOL: f64 = 1e-8;

impl ProblemDefinition {
    /// Checks dimensions, the initial point, the default configuration and
    /// the known solution.
    pub fn validate(&self) -> Result<()> {
        let dim = self.manifold.dim();
        check_len("objective", dim, self.objective.dim())?;
        self.manifold.check_point(&self.initial_point)?;
        self.config.validate(self.constraints.len())?;
        if let Some(known) = &self.known_solution {
            let r = self.known_residual(known)?;
            if !(r <= KNOWN_SOLUTION_TOL) {
                return Err(Error::Parameter(format!(
                    "stored solution of `{}` has optimality residual {r:e}",
                    self.name
                )));
            }
        }
        Ok(())
    }

    fn known_residual(&self, known: &KnownSolution) -> Result<f64> {
        let exact = self.objective.expected(&known.point).ok_or_else(|| {
            Error::Parameter(format!(
                "`{}` stores a known solution but has no closed-form objective",
                self.name
            ))
        })??;
        optimality_r(
            self.manifold.as_ref(),
            &exact.differential,
            self.constraints.as_ref(),
            &known.point,
            &known.multiplier,
        )
    }
}

/// Constants used by the reference multi-shape experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceDefaults {
    pub lambda_init: f64,
    pub mu_init: f64,
    pub gamma: f64,
    pub tau: f64,
    pub safeguard_lower: f64,
    pub safeguard_upper: f64,
    /// `t_k = step_scale / mu_k`.
    pub step_scale: f64,
    pub initial_iteration_limit: u64,
    pub initial_batch_size: usize,
    /// `T_k = k^(-decay_exponent)`.
    pub decay_exponent: f64,
    pub volume_floors: Vec<f64>,
    pub perimeter_caps: Vec<f64>,
    pub seeds: Vec<u64>,
    pub kl_terms: usize,
    pub kl_eta: f64,
}

pub fn reference_defaults() -> ReferenceDefaults {
    ReferenceDefaults {
        lambda_init: 0.0,
        mu_init: 10.0,
        gamma: 10.0,
        tau: 0.9,
        safeguard_lower: -100.0,
        safeguard_upper: 100.0,
        step_scale: 20.0,
        initial_iteration_limit: 5,
        initial_batch_size: 25,
        decay_exponent: 0.5,
        volume_floors: vec![0.035295, 0.025397, 0.036967],
        perimeter_caps: vec![0.72630, 0.56521, 0.69796],
        seeds: vec![964113, 454612, 421507, 107785],
        kl_terms: 100,
        kl_eta: 3.5,
    }
}
