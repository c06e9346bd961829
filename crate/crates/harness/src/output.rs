//! File formats: trace CSV, result JSON, aggregate CSV. Every file is written
//! to a temporary sibling and renamed into place.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sparsemf::RunTrace;

use crate::config::ExperimentSpec;
use crate::error::{HarnessError, Result};
use crate::record::{aggregate, AggregateRow, CellMode, ResultRecord, Stat};

pub const RESULTS_FILE: &str = "results.json";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const TRACE_DIR: &str = "traces";
pub const RESULT_SCHEMA: u32 = 1;

pub const TRACE_HEADER: [&str; 7] = ["iter", "k", "z_b", "rmse_a", "rmse_b", "rmse_v", "sparsity_b"];

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| HarnessError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| HarnessError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| HarnessError::io(path, e))?;
    tmp.persist(path).map_err(|e| HarnessError::io(path, e.error))?;
    Ok(())
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

pub fn trace_csv(trace: &RunTrace) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRACE_HEADER)?;
    for r in &trace.records {
        let m = r.metrics;
        w.write_record([
            r.iter.to_string(),
            fmt_float(r.k),
            fmt_float(r.z_b),
            opt(m.rmse_a),
            opt(m.rmse_b),
            opt(m.rmse_v),
            opt(m.sparsity_b),
        ])?;
    }
    w.into_inner().map_err(|e| HarnessError::io("<trace>", e.into_error()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub schema: u32,
    pub spec: ExperimentSpec,
    pub records: Vec<ResultRecord>,
}

pub fn results_json(spec: &ExperimentSpec, records: &[ResultRecord]) -> Result<Vec<u8>> {
    let file = ResultsFile {
        schema: RESULT_SCHEMA,
        spec: spec.clone(),
        records: records.to_vec(),
    };
    let mut out = serde_json::to_vec_pretty(&file).map_err(|source| HarnessError::Json {
        path: RESULTS_FILE.into(),
        source,
    })?;
    out.push(b'\n');
    Ok(out)
}

pub fn read_results(path: &Path) -> Result<ResultsFile> {
    let text = std::fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    let file: ResultsFile = serde_json::from_slice(&text).map_err(|source| HarnessError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    if file.schema != RESULT_SCHEMA {
        return Err(HarnessError::Config(format!(
            "{}: result schema {} not supported",
            path.display(),
            file.schema
        )));
    }
    Ok(file)
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["cell", "rho", "h", "sigma", "mode", "k", "k_factor", "runs", "failed"]
        .map(String::from)
        .to_vec();
    for m in [
        "rmse_a",
        "rmse_b",
        "rmse_v",
        "sparsity_b",
        "truth_zero_fraction",
        "iterations",
        "final_k",
    ] {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_std"));
    }
    w.write_record(&header)?;
    for row in rows {
        let c = row.cell;
        let (mode, k, factor) = match c.mode {
            CellMode::Tuned => ("tuned", None, None),
            CellMode::FixedK { k } => ("fixed_k", Some(k), None),
            CellMode::TunedKTimes { factor } => ("tuned_k_times", None, Some(factor)),
        };
        let mut fields = vec![
            c.label(),
            opt(c.rho),
            c.h.to_string(),
            fmt_float(c.sigma),
            mode.to_string(),
            opt(k),
            opt(factor),
            row.runs.to_string(),
            row.failed.to_string(),
        ];
        let stats: [&Stat; 7] = [
            &row.rmse_a,
            &row.rmse_b,
            &row.rmse_v,
            &row.sparsity_b,
            &row.truth_zero_fraction,
            &row.iterations,
            &row.final_k,
        ];
        for s in stats {
            fields.push(opt(s.mean));
            fields.push(opt(s.std));
        }
        w.write_record(&fields)?;
    }
    w.into_inner().map_err(|e| HarnessError::io("<aggregate>", e.into_error()))
}

pub fn trace_path(out: &Path, name: &str) -> PathBuf {
    out.join(TRACE_DIR).join(format!("{name}.csv"))
}

/// Writes results, aggregate, and any traces under `out`.
pub fn export_results(
    out: &Path,
    spec: &ExperimentSpec,
    records: &[ResultRecord],
    traces: &[(String, RunTrace)],
) -> Result<()> {
    if records.is_empty() {
        return Err(HarnessError::Config("no records to export".into()));
    }
    for (name, trace) in traces {
        write_atomic(&trace_path(out, name), &trace_csv(trace)?)?;
    }
    write_atomic(&out.join(RESULTS_FILE), &results_json(spec, records)?)?;
    write_atomic(&out.join(AGGREGATE_FILE), &aggregate_csv(&aggregate(records))?)
}

/// Rebuilds the aggregate CSV from a stored results file.
pub fn report(out: &Path) -> Result<Vec<AggregateRow>> {
    let file = read_results(&out.join(RESULTS_FILE))?;
    let rows = aggregate(&file.records);
    write_atomic(&out.join(AGGREGATE_FILE), &aggregate_csv(&rows)?)?;
    Ok(rows)
}
