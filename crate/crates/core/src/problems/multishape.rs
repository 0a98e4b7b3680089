use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{ProblemDefinition, ShapeLayout};
use crate::cone::ConePartition;
use crate::constraints::{ConstraintSystem, SafeguardBox};
use crate::error::{check_len, Error, Result};
use crate::manifold::ManifoldPoint;
use crate::outer::{AlParams, ScheduleParams, SolverConfig, StepRule, Termination};
use crate::shapes::{
    regular_polygon, CurveMetricOperator, CurveSpace, MultiShape, MultiShapeSpace, PolygonCurve,
};
use crate::stochastic::{KlField, ObjectiveSample, SampleRng, StochasticObjective};

/// Layout and data of the multi-shape tracking benchmark.
///
/// Shape `i` tracks a target whose node `p` sits at
/// `c_i + r_i (1 + a kappa(p / P, xi)) (cos theta_p, sin theta_p)` with
/// `theta_p = 2 pi p / P`. The reference polygon is the regular `P`-gon of
/// radius `r_i`; default bounds are fractions of its volume and perimeter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiShapeParams {
    pub count: usize,
    pub nodes: usize,
    pub kl: KlField,
    pub centers: Vec<[f64; 2]>,
    pub radii: Vec<f64>,
    /// Relative radial amplitude `a` of the field.
    pub amplitude: f64,
    /// Factor `beta` in front of the tracking functional.
    pub tracking_weight: f64,
    pub initial_centers: Vec<[f64; 2]>,
    pub initial_radii: Vec<f64>,
    pub volume_fraction: f64,
    pub perimeter_fraction: f64,
    /// Explicit floors, overriding `volume_fraction`.
    pub volume_floors: Option<Vec<f64>>,
    /// Explicit caps, overriding `perimeter_fraction`.
    pub perimeter_caps: Option<Vec<f64>>,
    pub mass_weight: f64,
    pub project_normal: bool,
    /// When false every sample uses `xi = 0`.
    pub stochastic: bool,
    /// Step rule; when `None`, `t = alpha / (L_J + mu L_h)` with the
    /// constants estimated at the initial shapes by
    /// [`lipschitz_step`](Self::lipschitz_step).
    pub step: Option<StepRule>,
    pub step_alpha: f64,
    pub sample_budget: u64,
}

impl MultiShapeParams {
    /// Targets on a ring around `(0.5, 0.5)`; initial shapes are enlarged
    /// and shifted copies.
    pub fn new(count: usize, nodes: usize, kl: KlField) -> Self {
        let (centers, radii, shifts): (Vec<[f64; 2]>, Vec<f64>, Vec<[f64; 2]>) = if count == 1 {
            (vec![[0.5, 0.5]], vec![0.2], vec![[0.05, 0.0]])
        } else {
            let ring = 0.25;
            let chord = 2.0 * ring * (PI / count as f64).sin();
            let base = 0.11f64.min(0.3 * chord);
            let mut c = Vec::new();
            let mut r = Vec::new();
            let mut s = Vec::new();
            for i in 0..count {
                let phi = -PI / 2.0 + 2.0 * PI * i as f64 / count as f64;
                c.push([0.5 + ring * phi.cos(), 0.5 + ring * phi.sin()]);
                r.push(if i % 2 == 1 { 0.82 * base } else { base });
                s.push([-0.4 * base * phi.sin(), 0.4 * base * phi.cos()]);
            }
            (c, r, s)
        };
        let initial_centers = centers
            .iter()
            .zip(&shifts)
            .map(|(c, s)| [c[0] + s[0], c[1] + s[1]])
            .collect();
        let initial_radii = radii.iter().map(|r| 1.3 * r).collect();
        Self {
            count,
            nodes,
            kl,
            centers,
            radii,
            amplitude: -0.15,
            tracking_weight: 10.0,
            initial_centers,
            initial_radii,
            volume_fraction: 0.95,
            perimeter_fraction: 1.05,
            volume_floors: None,
            perimeter_caps: None,
            mass_weight: 100.0,
            project_normal: false,
            stochastic: true,
            step: None,
            step_alpha: 1.0,
            sample_budget: 1_000_000,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.count < 1 {
            return Err(Error::Parameter(
                "multishape benchmark needs at least one shape".into(),
            ));
        }
        if self.nodes < 8 {
            return Err(Error::Parameter(format!(
                "multishape benchmark needs at least 8 nodes per curve, got {}",
                self.nodes
            )));
        }
        check_len("target centers", self.count, self.centers.len())?;
        check_len("target radii", self.count, self.radii.len())?;
        check_len("initial centers", self.count, self.initial_centers.len())?;
        check_len("initial radii", self.count, self.initial_radii.len())?;
        if let Some(f) = &self.volume_floors {
            check_len("volume floors", self.count, f.len())?;
        }
        if let Some(c) = &self.perimeter_caps {
            check_len("perimeter caps", self.count, c.len())?;
        }
        if self
            .radii
            .iter()
            .chain(&self.initial_radii)
            .any(|r| !(*r > 0.0))
        {
            return Err(Error::Parameter("shape radii must be positive".into()));
        }
        // kappa stays in [-noise, 1 + noise]
        let noise: f64 = (1..=self.kl.num_terms)
            .map(|l| 0.5 * (l as f64).powf(-self.kl.eta - 0.5))
            .sum();
        let worst = (1.0 - self.amplitude * noise).min(1.0 + self.amplitude * (1.0 + noise));
        if !(worst > 0.0) || !self.amplitude.is_finite() {
            return Err(Error::Parameter(format!(
                "amplitude {} can turn target radii nonpositive",
                self.amplitude
            )));
        }
        if !(self.tracking_weight > 0.0 && self.tracking_weight.is_finite()) {
            return Err(Error::Parameter(format!(
                "tracking weight must be positive, got {}",
                self.tracking_weight
            )));
        }
        if !(self.volume_fraction > 0.0 && self.perimeter_fraction > 0.0) {
            return Err(Error::Parameter("bound fractions must be positive".into()));
        }
        CurveMetricOperator::new(self.mass_weight)?;
        if let Some(step) = &self.step {
            step.validate()?;
        }
        Ok(())
    }

    /// `L_J = max_i 2 w_i / (c0 min_p omega_p)` bounds the objective
    /// curvature in the curve metric; `L_h = max_i (|grad vol_i|^2 +
    /// |grad per_i|^2)` is the Gauss-Newton curvature of the penalty, both
    /// at the initial shapes.
    pub fn lipschitz_step(&self) -> Result<StepRule> {
        let metric = CurveMetricOperator::new(self.mass_weight)?;
        let mut base: f64 = 0.0;
        let mut per_mu: f64 = 0.0;
        for (c, r) in self.initial_curves()?.iter().zip(self.reference_curves()?) {
            let w = self.tracking_weight * r.perimeter() / self.nodes as f64;
            let omega = CurveMetricOperator::node_weights(c)
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            base = base.max(2.0 * w / (self.mass_weight * omega));
            let sq = |d: Vec<f64>| -> Result<f64> {
                let g = metric.riesz(c, &d)?;
                Ok(g.iter().zip(&d).map(|(a, b)| a * b).sum())
            };
            per_mu = per_mu.max(sq(c.volume_gradient())? + sq(c.perimeter_gradient())?);
        }
        Ok(StepRule::Lipschitz {
            alpha: self.step_alpha,
            base,
            per_mu,
        })
    }

    fn polygons(centers: &[[f64; 2]], radii: &[f64], nodes: usize) -> Result<Vec<PolygonCurve>> {
        centers
            .iter()
            .zip(radii)
            .map(|(c, r)| regular_polygon(*c, *r, nodes, 0.0))
            .collect()
    }

    pub fn reference_curves(&self) -> Result<Vec<PolygonCurve>> {
        Self::polygons(&self.centers, &self.radii, self.nodes)
    }

    pub fn initial_curves(&self) -> Result<Vec<PolygonCurve>> {
        Self::polygons(&self.initial_centers, &self.initial_radii, self.nodes)
    }

    pub fn floors(&self) -> Result<Vec<f64>> {
        match &self.volume_floors {
            Some(f) => Ok(f.clone()),
            None => Ok(self
                .reference_curves()?
                .iter()
                .map(|c| self.volume_fraction * c.volume())
                .collect()),
        }
    }

    pub fn caps(&self) -> Result<Vec<f64>> {
        match &self.perimeter_caps {
            Some(c) => Ok(c.clone()),
            None => Ok(self
                .reference_curves()?
                .iter()
                .map(|c| self.perimeter_fraction * c.perimeter())
                .collect()),
        }
    }
}

/// `J(u, xi) = sum_i w_i sum_p |u_ip - q_ip(xi)|^2` with `w_i` the tracking
/// weight times the mean edge length of reference curve `i`, a node quadrature of the squared
/// distance integrated along the curve.
#[derive(Debug, Clone)]
pub struct TrackingObjective {
    count: usize,
    nodes: usize,
    kl: KlField,
    stochastic: bool,
    centers: Vec<[f64; 2]>,
    radii: Vec<f64>,
    amplitude: f64,
    weights: Vec<f64>,
    directions: Vec<[f64; 2]>,
    mean_profile: Vec<f64>,
    variance_profile: Vec<f64>,
    /// Row-major `nodes x num_terms`.
    modes: Vec<f64>,
}

impl TrackingObjective {
    pub fn new(params: &MultiShapeParams) -> Result<Self> {
        params.validate()?;
        let p = params.nodes;
        let mut mean_profile = Vec::with_capacity(p);
        let mut variance_profile = Vec::with_capacity(p);
        let mut modes = Vec::with_capacity(p * params.kl.num_terms);
        let mut directions = Vec::with_capacity(p);
        for k in 0..p {
            let s = k as f64 / p as f64;
            mean_profile.push(params.kl.mean(s)?);
            variance_profile.push(params.kl.variance(s)?);
            modes.extend(params.kl.modes(s)?);
            let t = 2.0 * PI * s;
            directions.push([t.cos(), t.sin()]);
        }
        let weights = params
            .reference_curves()?
            .iter()
            .map(|c| params.tracking_weight * c.perimeter() / p as f64)
            .collect();
        Ok(Self {
            count: params.count,
            nodes: p,
            kl: params.kl,
            stochastic: params.stochastic,
            centers: params.centers.clone(),
            radii: params.radii.clone(),
            amplitude: params.amplitude,
            weights,
            directions,
            mean_profile,
            variance_profile,
            modes,
        })
    }

    /// Field values at the nodes for coefficients `xi`.
    pub fn profile(&self, xi: &[f64]) -> Result<Vec<f64>> {
        check_len("KL coefficients", self.kl.num_terms, xi.len())?;
        let l = self.kl.num_terms;
        Ok(self
            .mean_profile
            .iter()
            .enumerate()
            .map(|(k, m)| {
                m + self.modes[k * l..(k + 1) * l]
                    .iter()
                    .zip(xi)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
            })
            .collect())
    }

    /// Target coordinates for a given nodal field profile.
    pub fn targets(&self, profile: &[f64]) -> Result<Vec<f64>> {
        check_len("field profile", self.nodes, profile.len())?;
        let mut q = Vec::with_capacity(2 * self.count * self.nodes);
        for i in 0..self.count {
            let (c, r) = (self.centers[i], self.radii[i]);
            for (d, k) in self.directions.iter().zip(profile) {
                let rho = r * (1.0 + self.amplitude * k);
                q.push(c[0] + rho * d[0]);
                q.push(c[1] + rho * d[1]);
            }
        }
        Ok(q)
    }

    pub fn expected_targets(&self) -> Result<Vec<f64>> {
        self.targets(&self.mean_profile)
    }

    fn tracking(&self, u: &[f64], q: &[f64]) -> (f64, Vec<f64>) {
        let block = 2 * self.nodes;
        let mut value = 0.0;
        let mut diff = vec![0.0; u.len()];
        for i in 0..self.count {
            let w = self.weights[i];
            for j in i * block..(i + 1) * block {
                let d = u[j] - q[j];
                value += w * d * d;
                diff[j] = 2.0 * w * d;
            }
        }
        (value, diff)
    }
}

impl StochasticObjective for TrackingObjective {
    fn dim(&self) -> usize {
        2 * self.count * self.nodes
    }

    fn sample(&self, u: &ManifoldPoint, rng: &mut SampleRng) -> Result<ObjectiveSample> {
        check_len("multishape point", self.dim(), u.len())?;
        let q = if self.stochastic {
            let xi = self.kl.sample_coefficients(rng);
            self.targets(&self.profile(&xi)?)?
        } else {
            self.expected_targets()?
        };
        let (value, differential) = self.tracking(u, &q);
        Ok(ObjectiveSample {
            value,
            differential,
        })
    }

    fn expected(&self, u: &ManifoldPoint) -> Option<Result<ObjectiveSample>> {
        Some((|| {
            check_len("multishape point", self.dim(), u.len())?;
            let q = self.expected_targets()?;
            let (mut value, differential) = self.tracking(u, &q);
            if self.stochastic {
                for i in 0..self.count {
                    let s = self.radii[i] * self.amplitude;
                    value += self.weights[i] * s * s * self.variance_profile.iter().sum::<f64>();
                }
            }
            Ok(ObjectiveSample {
                value,
                differential,
            })
        })())
    }
}

/// `h = (floor_i - vol_i for all i, per_i - cap_i for all i)`, all
/// inequalities.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeConstraints {
    count: usize,
    nodes: usize,
    floors: Vec<f64>,
    caps: Vec<f64>,
    partition: ConePartition,
}

impl ShapeConstraints {
    pub fn new(nodes: usize, floors: Vec<f64>, caps: Vec<f64>) -> Result<Self> {
        check_len("perimeter caps", floors.len(), caps.len())?;
        let count = floors.len();
        Ok(Self {
            count,
            nodes,
            floors,
            caps,
            partition: ConePartition::all_inequality(2 * count),
        })
    }

    pub fn floors(&self) -> &[f64] {
        &self.floors
    }

    pub fn caps(&self) -> &[f64] {
        &self.caps
    }

    fn curves(&self, u: &[f64]) -> Result<Vec<PolygonCurve>> {
        check_len("multishape point", 2 * self.count * self.nodes, u.len())?;
        u.chunks_exact(2 * self.nodes)
            .map(PolygonCurve::from_coords)
            .collect()
    }
}

impl ConstraintSystem for ShapeConstraints {
    fn partition(&self) -> &ConePartition {
        &self.partition
    }

    fn values(&self, u: &ManifoldPoint) -> Result<Vec<f64>> {
        let curves = self.curves(u)?;
        let vol = curves.iter().zip(&self.floors).map(|(c, f)| f - c.volume());
        let per = curves
            .iter()
            .zip(&self.caps)
            .map(|(c, p)| c.perimeter() - p);
        Ok(vol.chain(per).collect())
    }

    fn differentials(&self, u: &ManifoldPoint) -> Result<Vec<Vec<f64>>> {
        let curves = self.curves(u)?;
        let block = 2 * self.nodes;
        let dim = block * self.count;
        let mut rows = Vec::with_capacity(2 * self.count);
        for (i, c) in curves.iter().enumerate() {
            let mut row = vec![0.0; dim];
            for (r, g) in row[i * block..(i + 1) * block]
                .iter_mut()
                .zip(c.volume_gradient())
            {
                *r = -g;
            }
            rows.push(row);
        }
        for (i, c) in curves.iter().enumerate() {
            let mut row = vec![0.0; dim];
            row[i * block..(i + 1) * block].copy_from_slice(&c.perimeter_gradient());
            rows.push(row);
        }
        Ok(rows)
    }
}

/// Builds the benchmark from explicit parameters.
pub fn multishape_problem(params: &MultiShapeParams) -> Result<ProblemDefinition> {
    let objective = TrackingObjective::new(params)?;
    let constraints = ShapeConstraints::new(params.nodes, params.floors()?, params.caps()?)?;
    let metric = CurveMetricOperator::new(params.mass_weight)?;
    let mut curve_space = CurveSpace::new(params.nodes, metric);
    curve_space.project_normal = params.project_normal;
    let manifold = MultiShapeSpace::new(params.count, curve_space);

    let initial = MultiShape::new(params.initial_curves()?)?;
    let initial_point: Vec<f64> = initial
        .curves()
        .iter()
        .flat_map(|c| c.to_coords())
        .collect();
    let targets = objective
        .expected_targets()?
        .chunks_exact(2 * params.nodes)
        .map(PolygonCurve::from_coords)
        .collect::<Result<Vec<_>>>()?;

    let n = 2 * params.count;
    let problem = ProblemDefinition {
        name: "multishape".into(),
        manifold: Arc::new(manifold),
        objective: Arc::new(objective),
        constraints: Arc::new(constraints),
        initial_point: ManifoldPoint::new(initial_point),
        known_solution: None,
        config: SolverConfig {
            al: AlParams {
                gamma: 10.0,
                tau: 0.9,
                safeguard: SafeguardBox::uniform(n, -100.0, 100.0)?,
                mu_init: 10.0,
                lambda_init: None,
            },
            schedule: ScheduleParams::default(),
            step: match params.step {
                Some(s) => s,
                None => params.lipschitz_step()?,
            },
            termination: Termination {
                sample_budget: params.sample_budget,
                ..Termination::default()
            },
        },
        shapes: Some(ShapeLayout {
            count: params.count,
            nodes: params.nodes,
            targets,
        }),
    };
    problem.validate()?;
    Ok(problem)
}

/// The benchmark with its default layout.
pub fn multishape_benchmark(count: usize, nodes: usize, kl: KlField) -> Result<ProblemDefinition> {
    multishape_problem(&MultiShapeParams::new(count, nodes, kl))
}
