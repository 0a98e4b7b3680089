use std::path::{Path, PathBuf};

use serde::Serialize;

use salm_core::diagnostics::{
    akkt_residuals, cone_check, estimate_rate, gradient_check, kkt_check, multiplier_identity_gap,
    ConeCheck, GradientCheck, KktReport,
};
use salm_core::manifold::ManifoldPoint;
use salm_core::outer::{run_outer, RunFailure, RunOutcome};
use salm_core::problems::{reference_defaults, ProblemDefinition, KNOWN_SOLUTION_TOL};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::{write_csv, write_curves, write_json, RunSummary};

/// Overrides from the command line.
#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub budget: Option<u64>,
}

/// Files written for one seed.
#[derive(Debug, Clone)]
pub struct SeedOutput {
    pub seed: u64,
    pub csv: PathBuf,
    pub summary: PathBuf,
    pub curves: Vec<PathBuf>,
    pub summary_data: RunSummary,
}

fn objective_value(problem: &ProblemDefinition, u: &ManifoldPoint) -> Option<f64> {
    problem
        .objective
        .expected(u)
        .and_then(|r| r.ok())
        .map(|s| s.value)
}

fn max_violation(problem: &ProblemDefinition, u: &ManifoldPoint) -> Option<f64> {
    let h = problem.constraints.values(u).ok()?;
    problem.constraints.partition().distance(&h).ok()
}

fn summarize(
    problem: &ProblemDefinition,
    seed: u64,
    result: &Result<RunOutcome, RunFailure>,
) -> RunSummary {
    let (records, trajectory) = match result {
        Ok(o) => (&o.records, &o.trajectory),
        Err(f) => (&f.records, &f.trajectory),
    };
    let last = trajectory.last();
    let point = match result {
        Ok(o) => o.point.clone(),
        Err(_) => last.map_or(problem.initial_point.clone(), |s| s.u_next.clone()),
    };
    let lambda = match result {
        Ok(o) => o.lambda.clone(),
        Err(_) => last.map_or_else(Vec::new, |s| s.lambda_next.clone()),
    };
    let kkt = if lambda.len() == problem.constraints.len() {
        kkt_check(problem, &point, &lambda).ok()
    } else {
        None
    };
    let akkt_final = last
        .and_then(|s| akkt_residuals(problem, std::slice::from_ref(s)).ok())
        .and_then(|v| v.into_iter().next());
    let r_hat: Vec<f64> = records.iter().map(|r| r.optimality_estimate).collect();
    let rate = if r_hat.len() >= 3 {
        estimate_rate(&r_hat, r_hat.len().min(6)).ok()
    } else {
        None
    };
    RunSummary {
        problem: problem.name.clone(),
        seed,
        status: if result.is_ok() { "ok" } else { "aborted" }.into(),
        error: result.as_ref().err().map(|f| f.error.to_string()),
        stop_reason: result.as_ref().ok().map(|o| o.stop_reason),
        outer_iterations: records.len(),
        samples: match result {
            Ok(o) => o.samples,
            Err(_) => records.last().map_or(0, |r| r.samples),
        },
        final_point: point.as_slice().to_vec(),
        final_multiplier: lambda,
        final_penalty: match result {
            Ok(o) => o.mu,
            Err(_) => records.last().map_or(problem.config.al.mu_init, |r| r.mu),
        },
        objective_initial: objective_value(problem, &problem.initial_point),
        objective_final: objective_value(problem, &point),
        max_constraint_violation: max_violation(problem, &point),
        kkt,
        akkt_final,
        rate,
    }
}

/// Runs every configured seed and writes per-seed outputs. The first
/// numerical abort is returned after its partial logs are written.
pub fn run_command(config: &RunConfig, overrides: &RunOverrides) -> CliResult<Vec<SeedOutput>> {
    let mut problem = config.build_problem()?;
    if let Some(b) = overrides.budget {
        problem.config.termination.sample_budget = b;
    }
    let seeds = match overrides.seed {
        Some(s) => vec![s],
        None => config.run.seeds.clone(),
    };
    let out_dir = overrides
        .out_dir
        .clone()
        .unwrap_or_else(|| config.run.out_dir.clone());
    std::fs::create_dir_all(&out_dir).map_err(|e| CliError::io(&out_dir, e))?;

    let mut outputs = Vec::new();
    for seed in seeds {
        let result = run_outer(&problem, &problem.config, seed);
        let out = write_seed_outputs(
            &problem,
            &out_dir,
            seed,
            &result,
            config.run.record_wall_time,
        )?;
        if let Err(f) = result {
            return Err(CliError::from_run(f.error));
        }
        outputs.push(out);
    }
    Ok(outputs)
}

fn write_seed_outputs(
    problem: &ProblemDefinition,
    dir: &Path,
    seed: u64,
    result: &Result<RunOutcome, RunFailure>,
    record_wall_time: bool,
) -> CliResult<SeedOutput> {
    let stem = format!("{}_seed{seed}", problem.name);
    let records = match result {
        Ok(o) => &o.records,
        Err(f) => &f.records,
    };
    let csv = dir.join(format!("{stem}.csv"));
    write_csv(&csv, records, record_wall_time)?;
    let summary_data = summarize(problem, seed, result);
    let summary = dir.join(format!("{stem}.json"));
    write_json(&summary, &summary_data)?;

    let mut curves = Vec::new();
    if let Some(layout) = &problem.shapes {
        curves.extend(write_curves(
            dir,
            &format!("{}_target", problem.name),
            &layout.targets,
        )?);
        let initial = layout.curves(&problem.initial_point)?;
        curves.extend(write_curves(dir, &format!("{stem}_k0"), &initial)?);
        let trajectory = match result {
            Ok(o) => &o.trajectory,
            Err(f) => &f.trajectory,
        };
        for s in trajectory {
            let c = layout.curves(&s.u_next)?;
            curves.extend(write_curves(dir, &format!("{stem}_k{}", s.k), &c)?);
        }
    }
    Ok(SeedOutput {
        seed,
        csv,
        summary,
        curves,
        summary_data,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityCheck {
    pub iterations: usize,
    pub max_gap: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub problem: String,
    pub gradients: GradientCheck,
    pub identity: IdentityCheck,
    pub cone: ConeCheck,
    pub known_solution: Option<KktReport>,
    pub pass: bool,
    pub failures: Vec<String>,
}

pub const FD_TOL: f64 = 1e-6;
pub const IDENTITY_TOL: f64 = 1e-10;

/// Finite-difference gradients at 20 perturbed points, the multiplier
/// identity along a short run, the cone property suite and, when stored,
/// the KKT residuals of the known solution.
pub fn verify_problem(problem: &ProblemDefinition, seed: u64) -> CliResult<VerifyReport> {
    let perturbation = if problem.shapes.is_some() { 1e-3 } else { 0.5 };
    let gradients = gradient_check(problem, 20, perturbation, seed, FD_TOL)?;

    let mut cfg = problem.config.clone();
    cfg.termination.k_max = cfg.termination.k_max.min(6);
    cfg.termination.sample_budget = cfg.termination.sample_budget.min(100_000);
    cfg.termination.r_tol = 0.0;
    let run = run_outer(problem, &cfg, seed).map_err(|f| CliError::from_run(f.error))?;
    let mut max_gap: f64 = 0.0;
    let mut identity_ok = true;
    for s in &run.trajectory {
        let dj = match problem.objective.expected(&s.u_next) {
            Some(r) => r?.differential,
            None => vec![0.0; s.u_next.len()],
        };
        let gap = multiplier_identity_gap(&dj, problem.constraints.as_ref(), s)?;
        let scale = s.lambda_next.iter().fold(1.0f64, |m, l| m.max(l.abs()));
        identity_ok &= gap <= IDENTITY_TOL * scale;
        max_gap = max_gap.max(gap);
    }
    let identity = IdentityCheck {
        iterations: run.trajectory.len(),
        max_gap,
        pass: identity_ok,
    };

    let cone = cone_check(problem.constraints.partition(), 1000, seed)?;
    let known_solution = match &problem.known_solution {
        Some(k) => Some(kkt_check(problem, &k.point, &k.multiplier)?),
        None => None,
    };

    let mut failures = Vec::new();
    if !gradients.pass {
        failures.push(format!(
            "gradient check: {} relative error {:e}",
            gradients.worst, gradients.max_relative_error
        ));
    }
    if !identity.pass {
        failures.push(format!("multiplier identity gap {:e}", identity.max_gap));
    }
    if !cone.pass() {
        failures.push(format!("cone properties: {cone:?}"));
    }
    if let Some(k) = &known_solution {
        if !k.is_kkt(KNOWN_SOLUTION_TOL) {
            failures.push(format!("known solution residuals {k:?}"));
        }
    }
    Ok(VerifyReport {
        problem: problem.name.clone(),
        gradients,
        identity,
        cone,
        known_solution,
        pass: failures.is_empty(),
        failures,
    })
}

pub fn verify_command(config: &RunConfig) -> CliResult<VerifyReport> {
    let problem = config.build_problem()?;
    verify_problem(&problem, config.run.seeds[0])
}

/// Reference constants as a TOML document.
pub fn defaults_command() -> String {
    toml::to_string(&reference_defaults()).expect("constants serialize")
}

/// Maps a verification report to the command result.
pub fn verify_outcome(report: &VerifyReport) -> CliResult<()> {
    if report.pass {
        Ok(())
    } else {
        Err(CliError::Verify(report.failures.join("; ")))
    }
}
