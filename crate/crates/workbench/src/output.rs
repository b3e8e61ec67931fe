//! CSV and JSON emission.

use std::path::Path;

use fomcert_core::verifier::{CutLogEntry, VerificationReport};
use serde::Serialize;

#[derive(Debug, Serialize)]
struct ResultRow<'a> {
    k: usize,
    delta: Option<f64>,
    best_bound: f64,
    sample_max: Option<f64>,
    status: &'a str,
    gap: Option<f64>,
    milp_time: f64,
    obbt_time: f64,
    cut_time: f64,
    cuts: usize,
    lp_bound_before_cuts: Option<f64>,
    lp_bound_after_cuts: Option<f64>,
    frac_theory_tighter: f64,
    binaries: usize,
    constraints: usize,
}

fn create(path: &Path) -> anyhow::Result<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(csv::Writer::from_path(path)?)
}

/// One row per `K`; `sample_max` is optional.
pub fn write_results(path: &Path, report: &VerificationReport, sample_max: Option<&[f64]>) -> anyhow::Result<()> {
    let mut w = create(path)?;
    for r in &report.per_k {
        w.serialize(ResultRow {
            k: r.k,
            delta: r.delta,
            best_bound: r.best_bound,
            sample_max: sample_max.and_then(|s| s.get(r.k - 1).copied()),
            status: &r.status,
            gap: r.gap,
            milp_time: r.milp_time,
            obbt_time: r.obbt_time,
            cut_time: r.cut_time,
            cuts: r.cuts,
            lp_bound_before_cuts: r.lp_bound_before_cuts,
            lp_bound_after_cuts: r.lp_bound_after_cuts,
            frac_theory_tighter: r.frac_theory_tighter,
            binaries: r.binaries,
            constraints: r.constraints,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_cuts(path: &Path, log: &[CutLogEntry]) -> anyhow::Result<()> {
    let mut w = create(path)?;
    w.write_record(["k", "round", "component", "family", "index_size", "violation"])?;
    for e in log {
        w.write_record([
            e.k.to_string(),
            e.round.to_string(),
            e.component.clone(),
            e.family.as_str().to_string(),
            e.index_size.to_string(),
            e.violation.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_samples(path: &Path, sample_max: &[f64]) -> anyhow::Result<()> {
    let mut w = create(path)?;
    w.write_record(["k", "sample_max"])?;
    for (i, v) in sample_max.iter().enumerate() {
        w.write_record([(i + 1).to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}
