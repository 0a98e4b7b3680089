//! CSV logs, JSON summaries and curve snapshot files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use salm_core::diagnostics::{AkktResidual, KktReport, RateEstimate};
use salm_core::outer::{RunRecord, StopReason};
use salm_core::shapes::{write_curve, PolygonCurve};

use crate::error::{CliError, CliResult};

pub const CSV_HEADER: [&str; 11] = [
    "k",
    "cum_inner_steps",
    "R_k",
    "mu_k",
    "H_k",
    "r_hat_k",
    "obj_hat",
    "grad_norm_hat",
    "m_k",
    "t_k",
    "wall_ms",
];

#[derive(Debug, Serialize)]
struct CsvRow {
    k: u64,
    cum_inner_steps: u64,
    #[serde(rename = "R_k")]
    r_k: u64,
    mu_k: f64,
    #[serde(rename = "H_k")]
    h_k: f64,
    r_hat_k: f64,
    obj_hat: f64,
    grad_norm_hat: f64,
    m_k: usize,
    t_k: f64,
    wall_ms: f64,
}

/// Writes one row per outer iteration. `wall_ms` is written as 0 unless
/// `record_wall_time` is set.
pub fn write_csv(path: &Path, records: &[RunRecord], record_wall_time: bool) -> CliResult<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let csv_err = |e: csv::Error| CliError::io(path, std::io::Error::other(e));
    for r in records {
        let row = CsvRow {
            k: r.k,
            cum_inner_steps: r.cum_inner_steps,
            r_k: r.stopping_index,
            mu_k: r.mu,
            h_k: r.feasibility,
            r_hat_k: r.optimality_estimate,
            obj_hat: r.objective_estimate,
            grad_norm_hat: r.gradient_norm_estimate,
            m_k: r.batch_size,
            t_k: r.step_size,
            wall_ms: if record_wall_time { r.wall_ms } else { 0.0 },
        };
        w.serialize(row).map_err(csv_err)?;
    }
    if records.is_empty() {
        w.write_record(CSV_HEADER).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub problem: String,
    pub seed: u64,
    pub status: String,
    pub error: Option<String>,
    pub stop_reason: Option<StopReason>,
    pub outer_iterations: usize,
    pub samples: u64,
    pub final_point: Vec<f64>,
    pub final_multiplier: Vec<f64>,
    pub final_penalty: f64,
    pub objective_initial: Option<f64>,
    pub objective_final: Option<f64>,
    pub max_constraint_violation: Option<f64>,
    pub kkt: Option<KktReport>,
    pub akkt_final: Option<AkktResidual>,
    pub rate: Option<RateEstimate>,
}

pub fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| CliError::io(path, std::io::Error::other(e)))?;
    writeln!(w).map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Writes `{stem}_curve{i}.txt` for each curve and returns the paths.
pub fn write_curves(dir: &Path, stem: &str, curves: &[PolygonCurve]) -> CliResult<Vec<PathBuf>> {
    curves
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let path = dir.join(format!("{stem}_curve{i}.txt"));
            let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
            let mut w = BufWriter::new(file);
            write_curve(c, &mut w).map_err(|e| CliError::io(&path, e))?;
            w.flush().map_err(|e| CliError::io(&path, e))?;
            Ok(path)
        })
        .collect()
}
