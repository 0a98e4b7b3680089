//! TOML run configuration. Every section is optional; omitted values fall
//! back to the problem's defaults. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use salm_core::constraints::SafeguardBox;
use salm_core::outer::StepRule;
use salm_core::problems::{
    multishape_problem, quadratic_benchmark, reference_defaults, MultiShapeParams,
    ProblemDefinition,
};
use salm_core::stochastic::KlField;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSection,
    #[serde(default)]
    pub auglag: AuglagSection,
    pub step: Option<StepSection>,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub termination: TerminationSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSection {
    Quadratic {
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default)]
        noise_sigma: f64,
    },
    Multishape(MultiShapeSection),
}

fn default_dim() -> usize {
    3
}

impl Default for ProblemSection {
    fn default() -> Self {
        ProblemSection::Quadratic {
            dim: default_dim(),
            noise_sigma: 0.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiShapeSection {
    pub count: Option<usize>,
    pub nodes: Option<usize>,
    pub kl_terms: Option<usize>,
    pub kl_eta: Option<f64>,
    pub amplitude: Option<f64>,
    pub tracking_weight: Option<f64>,
    pub mass_weight: Option<f64>,
    pub volume_fraction: Option<f64>,
    pub perimeter_fraction: Option<f64>,
    pub volume_floors: Option<Vec<f64>>,
    pub perimeter_caps: Option<Vec<f64>>,
    pub stochastic: Option<bool>,
    pub project_normal: Option<bool>,
    pub step_alpha: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuglagSection {
    pub gamma: Option<f64>,
    pub tau: Option<f64>,
    pub mu_init: Option<f64>,
    /// Same initial value for every multiplier.
    pub lambda_init: Option<f64>,
    pub safeguard_lower: Option<f64>,
    pub safeguard_upper: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepSection {
    Constant { step: f64 },
    PenaltyScaled { scale: f64 },
    Lipschitz { alpha: f64, base: f64, per_mu: f64 },
}

impl From<StepSection> for StepRule {
    fn from(s: StepSection) -> Self {
        match s {
            StepSection::Constant { step } => StepRule::Constant { step },
            StepSection::PenaltyScaled { scale } => StepRule::PenaltyScaled { scale },
            StepSection::Lipschitz {
                alpha,
                base,
                per_mu,
            } => StepRule::Lipschitz {
                alpha,
                base,
                per_mu,
            },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub initial_iteration_limit: Option<u64>,
    pub initial_batch_size: Option<usize>,
    pub decay_exponent: Option<f64>,
    pub max_iteration_limit: Option<u64>,
    pub max_batch_size: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminationSection {
    pub r_tol: Option<f64>,
    pub k_max: Option<u64>,
    pub sample_budget: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Log elapsed wall time; off by default so outputs are reproducible.
    #[serde(default)]
    pub record_wall_time: bool,
}

fn default_seeds() -> Vec<u64> {
    reference_defaults().seeds
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seeds: default_seeds(),
            out_dir: default_out_dir(),
            record_wall_time: false,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// The configured problem with every override applied and validated.
    pub fn build_problem(&self) -> CliResult<ProblemDefinition> {
        let mut problem = match &self.problem {
            ProblemSection::Quadratic { dim, noise_sigma } => {
                quadratic_benchmark(*dim, *noise_sigma)?
            }
            ProblemSection::Multishape(s) => multishape_problem(&s.params()?)?,
        };
        let cfg = &mut problem.config;
        let n = problem.constraints.len();
        let a = &self.auglag;
        if let Some(v) = a.gamma {
            cfg.al.gamma = v;
        }
        if let Some(v) = a.tau {
            cfg.al.tau = v;
        }
        if let Some(v) = a.mu_init {
            cfg.al.mu_init = v;
        }
        if let Some(v) = a.lambda_init {
            cfg.al.lambda_init = Some(vec![v; n]);
        }
        if a.safeguard_lower.is_some() || a.safeguard_upper.is_some() {
            let lo = a.safeguard_lower.unwrap_or(-100.0);
            let hi = a.safeguard_upper.unwrap_or(100.0);
            cfg.al.safeguard = SafeguardBox::uniform(n, lo, hi)?;
        }
        if let Some(s) = self.step {
            cfg.step = s.into();
        }
        let s = &self.schedule;
        if let Some(v) = s.initial_iteration_limit {
            cfg.schedule.initial_iteration_limit = v;
        }
        if let Some(v) = s.initial_batch_size {
            cfg.schedule.initial_batch_size = v;
        }
        if let Some(v) = s.decay_exponent {
            cfg.schedule.decay_exponent = v;
        }
        if s.max_iteration_limit.is_some() {
            cfg.schedule.max_iteration_limit = s.max_iteration_limit;
        }
        if s.max_batch_size.is_some() {
            cfg.schedule.max_batch_size = s.max_batch_size;
        }
        let t = &self.termination;
        if let Some(v) = t.r_tol {
            cfg.termination.r_tol = v;
        }
        if let Some(v) = t.k_max {
            cfg.termination.k_max = v;
        }
        if let Some(v) = t.sample_budget {
            cfg.termination.sample_budget = v;
        }
        problem.config.validate(n)?;
        if self.run.seeds.is_empty() {
            return Err(CliError::Config("run.seeds is empty".into()));
        }
        Ok(problem)
    }
}

impl MultiShapeSection {
    pub fn params(&self) -> CliResult<MultiShapeParams> {
        let kl = KlField::new(self.kl_terms.unwrap_or(100), self.kl_eta.unwrap_or(3.5))?;
        let mut p = MultiShapeParams::new(self.count.unwrap_or(3), self.nodes.unwrap_or(64), kl);
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field { p.$field = v.clone(); })*
            };
        }
        set!(
            amplitude,
            tracking_weight,
            mass_weight,
            volume_fraction,
            perimeter_fraction,
            stochastic,
            project_normal,
            step_alpha
        );
        if self.volume_floors.is_some() {
            p.volume_floors = self.volume_floors.clone();
        }
        if self.perimeter_caps.is_some() {
            p.perimeter_caps = self.perimeter_caps.clone();
        }
        Ok(p)
    }
}
