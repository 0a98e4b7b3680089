//! The safeguarded augmented Lagrangian outer loop.
//!
//! Each iteration `k` projects the multiplier into the safeguarding box,
//! runs the randomly stopped inner loop on `L_A(., w^k; mu_k)`, updates the
//! multiplier from the new constraint values, and raises the penalty when
//! the feasibility measure did not shrink by the factor `tau`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::auglag::feasibility_from_values;
use crate::cone::norm2;
use crate::constraints::{
    check_penalty, lagrangian_gradient, multiplier_from_values, safeguard, SafeguardBox,
};
use crate::error::{check_len, Error, Result};
use crate::inner::{run_inner, InnerLoopParams, PenalizedObjective, StepRecord};
use crate::manifold::ManifoldPoint;
use crate::problems::ProblemDefinition;
use crate::stochastic::{batch_gradient, RngStream, StreamPurpose};

/// Multiplier and penalty parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlParams {
    /// Penalty growth factor, `> 1`.
    pub gamma: f64,
    /// Required feasibility decrease factor, in `(0, 1)`.
    pub tau: f64,
    pub safeguard: SafeguardBox,
    pub mu_init: f64,
    /// Initial multiplier; zeros when `None`.
    pub lambda_init: Option<Vec<f64>>,
}

impl AlParams {
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.gamma > 1.0 && self.gamma.is_finite()) {
            return Err(Error::Parameter(format!(
                "gamma must exceed 1, got {}",
                self.gamma
            )));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Parameter(format!(
                "tau must lie in (0, 1), got {}",
                self.tau
            )));
        }
        check_penalty(self.mu_init)?;
        check_len("safeguard box", n, self.safeguard.len())?;
        if let Some(l) = &self.lambda_init {
            check_len("initial multiplier", n, l.len())?;
        }
        Ok(())
    }
}

/// Rules for `N_k` and `m_k`: both are divided by `T_k = k^(-decay_exponent)`
/// each outer step, and `N_k` is additionally multiplied by `gamma` when the
/// penalty grew.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub initial_iteration_limit: u64,
    pub initial_batch_size: usize,
    pub decay_exponent: f64,
    pub max_iteration_limit: Option<u64>,
    pub max_batch_size: Option<usize>,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            initial_iteration_limit: 5,
            initial_batch_size: 25,
            decay_exponent: 0.5,
            max_iteration_limit: None,
            max_batch_size: None,
        }
    }
}

impl ScheduleParams {
    pub fn validate(&self) -> Result<()> {
        if self.initial_iteration_limit < 1 || self.initial_batch_size < 1 {
            return Err(Error::Parameter(
                "initial iteration limit and batch size must be at least 1".into(),
            ));
        }
        if !(self.decay_exponent >= 0.0 && self.decay_exponent.is_finite()) {
            return Err(Error::Parameter(format!(
                "schedule decay exponent must be nonnegative, got {}",
                self.decay_exponent
            )));
        }
        Ok(())
    }

    /// `1 / T_k`.
    fn growth(&self, k: u64) -> f64 {
        let k = k as f64;
        if self.decay_exponent == 0.5 {
            k.sqrt()
        } else {
            k.powf(self.decay_exponent)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleState {
    pub iteration_limit: u64,
    pub batch_size: usize,
}

impl ScheduleState {
    pub fn initial(params: &ScheduleParams) -> Self {
        Self {
            iteration_limit: params.initial_iteration_limit,
            batch_size: params.initial_batch_size,
        }
    }
}

/// Ceiling that ignores round-off just above an integer.
fn ceil_clean(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

/// Schedule for outer iteration `k >= 2` given the one used at `k - 1`.
pub fn evolve_schedule(
    state: &ScheduleState,
    k: u64,
    mu_increased: bool,
    gamma: f64,
    params: &ScheduleParams,
) -> Result<ScheduleState> {
    if k < 2 {
        return Err(Error::Parameter(format!(
            "schedule evolution starts at k = 2, got {k}"
        )));
    }
    let g = params.growth(k);
    let factor = if mu_increased { gamma } else { 1.0 };
    let n = ceil_clean(factor * state.iteration_limit as f64 * g);
    let m = ceil_clean(state.batch_size as f64 * g);
    let mut next = ScheduleState {
        iteration_limit: if n >= u64::MAX as f64 {
            u64::MAX
        } else {
            n as u64
        },
        batch_size: if m >= usize::MAX as f64 {
            usize::MAX
        } else {
            m as usize
        },
    };
    if let Some(cap) = params.max_iteration_limit {
        next.iteration_limit = next.iteration_limit.min(cap);
    }
    if let Some(cap) = params.max_batch_size {
        next.batch_size = next.batch_size.min(cap);
    }
    Ok(next)
}

/// `mu_{k+1}`: unchanged when `k = 1` or `H_{k+1} <= tau H_k`, else `gamma mu_k`.
pub fn penalty_update(h_next: f64, h_curr: f64, mu: f64, k: u64, params: &AlParams) -> f64 {
    if k == 1 || h_next <= params.tau * h_curr {
        mu
    } else {
        params.gamma * mu
    }
}

/// How the step size `t_k` depends on the penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StepRule {
    Constant {
        step: f64,
    },
    /// `t_k = scale / mu_k`.
    PenaltyScaled {
        scale: f64,
    },
    /// `t_k = alpha / L_k` with `L_k = base + per_mu * mu_k`.
    Lipschitz {
        alpha: f64,
        base: f64,
        per_mu: f64,
    },
}

impl StepRule {
    pub fn step_size(&self, mu: f64) -> f64 {
        match *self {
            StepRule::Constant { step } => step,
            StepRule::PenaltyScaled { scale } => scale / mu,
            StepRule::Lipschitz {
                alpha,
                base,
                per_mu,
            } => alpha / (base + per_mu * mu),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            StepRule::Constant { step } => step > 0.0 && step.is_finite(),
            StepRule::PenaltyScaled { scale } => scale > 0.0 && scale.is_finite(),
            StepRule::Lipschitz {
                alpha,
                base,
                per_mu,
            } => alpha > 0.0 && base >= 0.0 && per_mu >= 0.0 && base + per_mu > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!("invalid step rule {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Termination {
    pub r_tol: f64,
    pub k_max: u64,
    /// Total objective samples (gradient and estimation draws).
    pub sample_budget: u64,
}

impl Default for Termination {
    fn default() -> Self {
        Self {
            r_tol: 1e-4,
            k_max: 12,
            sample_budget: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub al: AlParams,
    pub schedule: ScheduleParams,
    pub step: StepRule,
    pub termination: Termination,
}

impl SolverConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        self.al.validate(n)?;
        self.schedule.validate()?;
        self.step.validate()?;
        if self.termination.k_max < 1 {
            return Err(Error::Parameter("k_max must be at least 1".into()));
        }
        Ok(())
    }
}

/// One row per outer iteration, describing the end of inner loop `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub k: u64,
    pub cum_inner_steps: u64,
    pub stopping_index: u64,
    /// `mu_k` used by this inner loop.
    pub mu: f64,
    /// `H_{k+1} = H(u^{k+1}, w^k; mu_k)`.
    pub feasibility: f64,
    /// `r(u^{k+1}, lambda^{k+1})` with `grad j` replaced by a batch mean.
    pub optimality_estimate: f64,
    /// Batch mean of `J` at `u^{k+1}`.
    pub objective_estimate: f64,
    /// `|g|_G` of the last inner step's batch gradient of `L_A`.
    pub gradient_norm_estimate: f64,
    pub batch_size: usize,
    pub iteration_limit: u64,
    pub step_size: f64,
    pub wall_ms: f64,
    pub samples: u64,
    pub truncated: bool,
}

/// State after outer iteration `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateSnapshot {
    pub k: u64,
    pub w: Vec<f64>,
    pub mu: f64,
    pub u_next: ManifoldPoint,
    pub lambda_next: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    IterationLimit,
    SampleBudget,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub records: Vec<RunRecord>,
    pub trajectory: Vec<IterateSnapshot>,
    pub steps: Vec<Vec<StepRecord>>,
    pub point: ManifoldPoint,
    pub lambda: Vec<f64>,
    pub mu: f64,
    pub stop_reason: StopReason,
    pub samples: u64,
}

/// A run that aborted, with everything logged before the failure.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub error: Error,
    pub records: Vec<RunRecord>,
    pub trajectory: Vec<IterateSnapshot>,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "run aborted after {} outer iterations: {}",
            self.records.len(),
            self.error
        )
    }
}

impl std::error::Error for RunFailure {}

/// Runs the outer loop from the problem's initial point.
pub fn run_outer(
    problem: &ProblemDefinition,
    config: &SolverConfig,
    root_seed: u64,
) -> std::result::Result<RunOutcome, RunFailure> {
    let mut records = Vec::new();
    let mut trajectory = Vec::new();
    let mut steps = Vec::new();
    let result = outer_loop(
        problem,
        config,
        root_seed,
        &mut records,
        &mut trajectory,
        &mut steps,
    );
    match result {
        Ok((point, lambda, mu, stop_reason, samples)) => Ok(RunOutcome {
            records,
            trajectory,
            steps,
            point,
            lambda,
            mu,
            stop_reason,
            samples,
        }),
        Err(error) => Err(RunFailure {
            error,
            records,
            trajectory,
        }),
    }
}

type LoopEnd = (ManifoldPoint, Vec<f64>, f64, StopReason, u64);

fn outer_loop(
    problem: &ProblemDefinition,
    config: &SolverConfig,
    root_seed: u64,
    records: &mut Vec<RunRecord>,
    trajectory: &mut Vec<IterateSnapshot>,
    steps_log: &mut Vec<Vec<StepRecord>>,
) -> Result<LoopEnd> {
    let manifold = problem.manifold.as_ref();
    let objective = problem.objective.as_ref();
    let constraints = problem.constraints.as_ref();
    let n = constraints.len();
    config.validate(n)?;
    manifold.check_point(&problem.initial_point)?;

    let al = &config.al;
    let term = &config.termination;
    let root = RngStream::new(root_seed);
    let started = Instant::now();

    let mut u = problem.initial_point.clone();
    let mut lambda = al.lambda_init.clone().unwrap_or_else(|| vec![0.0; n]);
    let mut mu = al.mu_init;
    let mut schedule = ScheduleState::initial(&config.schedule);
    let mut h_curr = f64::NAN;
    let mut samples = 0u64;
    let mut cum_steps = 0u64;

    for k in 1..=term.k_max {
        // the estimate batch is drawn after the inner loop and must fit too
        let reserve = schedule.batch_size as u64;
        if samples + reserve > term.sample_budget {
            return Ok((u, lambda, mu, StopReason::SampleBudget, samples));
        }
        let w = safeguard(&lambda, &al.safeguard)?;
        let step_size = config.step.step_size(mu);
        let penalized = PenalizedObjective::new(objective, constraints, w.clone(), mu)?;
        let mut params =
            InnerLoopParams::new(step_size, schedule.iteration_limit, schedule.batch_size);
        params.max_samples = Some(term.sample_budget - samples - reserve);
        let outer_stream = root.outer(k);
        let inner = run_inner(manifold, &penalized, &u, &params, &outer_stream)?;
        samples += inner.samples;
        cum_steps += inner.steps.len() as u64;

        let u_next = inner.u_next;
        let h = constraints.values(&u_next)?;
        let lambda_next = multiplier_from_values(&h, &w, mu, constraints.partition())?;
        let h_next = feasibility_from_values(&h, &w, mu, constraints.partition())?;

        let est = batch_gradient(
            objective,
            &u_next,
            schedule.batch_size,
            &outer_stream.with_purpose(StreamPurpose::Estimate),
        )?;
        samples += est.count as u64;
        let dh = constraints.differentials(&u_next)?;
        let dl = lagrangian_gradient(&est.differential, &dh, &lambda_next)?;
        let grad = manifold.gradient_from_differential(&u_next, &dl)?;
        let shifted: Vec<f64> = h.iter().zip(&lambda_next).map(|(a, l)| a + l).collect();
        let proj = constraints.partition().project(&shifted)?;
        let comp = norm2(&h.iter().zip(&proj).map(|(a, p)| a - p).collect::<Vec<_>>());
        let r_hat = manifold.norm(&u_next, &grad)? + comp;

        if !(h_next.is_finite() && r_hat.is_finite() && est.value.is_finite())
            || lambda_next.iter().any(|l| !l.is_finite())
        {
            return Err(Error::Numerical(format!(
                "non-finite state after outer iteration {k}"
            )));
        }

        records.push(RunRecord {
            k,
            cum_inner_steps: cum_steps,
            stopping_index: inner.stopping_index,
            mu,
            feasibility: h_next,
            optimality_estimate: r_hat,
            objective_estimate: est.value,
            gradient_norm_estimate: inner.steps.last().map_or(0.0, |s| s.gradient_norm),
            batch_size: schedule.batch_size,
            iteration_limit: schedule.iteration_limit,
            step_size,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
            samples,
            truncated: inner.truncated,
        });
        trajectory.push(IterateSnapshot {
            k,
            w,
            mu,
            u_next: u_next.clone(),
            lambda_next: lambda_next.clone(),
        });
        steps_log.push(inner.steps);

        let mu_next = penalty_update(h_next, h_curr, mu, k, al);
        u = u_next;
        lambda = lambda_next;

        let stop = if r_hat <= term.r_tol {
            Some(StopReason::Converged)
        } else if records.last().is_some_and(|r| r.truncated) || samples >= term.sample_budget {
            Some(StopReason::SampleBudget)
        } else if k == term.k_max {
            Some(StopReason::IterationLimit)
        } else {
            None
        };
        if let Some(reason) = stop {
            return Ok((u, lambda, mu_next, reason, samples));
        }

        schedule = evolve_schedule(&schedule, k + 1, mu_next > mu, al.gamma, &config.schedule)?;
        h_curr = h_next;
        mu = mu_next;
    }
    unreachable!("loop always returns by k_max")
}
