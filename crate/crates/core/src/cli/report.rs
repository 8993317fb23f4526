//! CSV and JSON outputs of an experiment run.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::validation::{ExperimentReport, RecordFlags, ReplicationRecord, SpectralRecord};

pub const COVERAGE_FILE: &str = "coverage.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Full round-trip precision: 17 significant digits.
pub fn fmt_full(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

/// Four significant digits for human-facing tables.
pub fn fmt_short(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    if !(-4..6).contains(&magnitude) {
        return format!("{x:.3e}");
    }
    let decimals = (3 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Writes `bytes` to `dir/name` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, &target)?;
    Ok(target)
}

fn csv_bytes(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(&row)?;
    }
    writer.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub const COVERAGE_HEADER: [&str; 8] = [
    "replication",
    "estimator",
    "coverage",
    "scaled_length",
    "tau_hat",
    "lower_offset",
    "upper_offset",
    "flags",
];

pub fn coverage_csv(records: &[ReplicationRecord]) -> Result<Vec<u8>> {
    csv_bytes(
        &COVERAGE_HEADER,
        records.iter().map(|r| {
            vec![
                r.replication.to_string(),
                r.estimator.clone(),
                fmt_full(r.coverage),
                fmt_full(r.scaled_length),
                fmt_full(r.tau_hat),
                fmt_full(r.lower_offset),
                fmt_full(r.upper_offset),
                r.flags.to_string(),
            ]
        }),
    )
}

pub fn diagnostics_csv(
    records: &[ReplicationRecord],
    spectral: &[SpectralRecord],
) -> Result<Vec<u8>> {
    csv_bytes(
        &[
            "replication",
            "estimator",
            "lp_norm",
            "perturbation_norm",
            "trace_pinv",
            "trace_pinv_sq",
            "lambda_min",
        ],
        records.iter().map(|r| {
            let s = spectral
                .iter()
                .find(|s| s.replication == r.replication)
                .map(|s| s.diagnostics);
            vec![
                r.replication.to_string(),
                r.estimator.clone(),
                fmt_full(r.lp_norm),
                fmt_full(r.perturbation_norm),
                fmt_full(s.map_or(f64::NAN, |d| d.trace_pinv)),
                fmt_full(s.map_or(f64::NAN, |d| d.trace_pinv_sq)),
                fmt_full(s.map_or(f64::NAN, |d| d.lambda_min)),
            ]
        }),
    )
}

pub fn summary_csv(report: &ExperimentReport) -> Result<Vec<u8>> {
    let mut rows = Vec::new();
    for s in &report.summaries {
        let mut push = |metric: &str, value: f64, se: f64| {
            rows.push(vec![
                s.estimator.clone(),
                metric.to_string(),
                fmt_full(value),
                fmt_full(se),
            ]);
        };
        push("replications", s.replications as f64, f64::NAN);
        push("failures", s.failures as f64, f64::NAN);
        push("mean_coverage", s.coverage.value, s.coverage.std_error);
        push("honesty_gap", s.honesty_gap.value, s.honesty_gap.std_error);
        push(
            "mean_scaled_length",
            s.scaled_length.value,
            s.scaled_length.std_error,
        );
        push("mean_tau_hat", s.tau_hat.value, s.tau_hat.std_error);
        push("tau_hat_iqr", s.tau_iqr, f64::NAN);
        push("mean_lp_norm", s.lp_norm.value, s.lp_norm.std_error);
        push("median_perturbation_norm", s.perturbation_median, f64::NAN);
        push("oracle_length", s.oracle_length, f64::NAN);
        push("length_relative_gap", s.length_relative_gap, f64::NAN);
        push(
            "tau_reference",
            s.tau_reference.unwrap_or(f64::NAN),
            f64::NAN,
        );
    }
    csv_bytes(
        &["estimator", "metric", "value", "std_error"],
        rows.into_iter(),
    )
}

/// A row of `coverage.csv` as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRow {
    pub replication: u64,
    pub estimator: String,
    pub coverage: f64,
    pub scaled_length: f64,
    pub tau_hat: f64,
    pub lower_offset: f64,
    pub upper_offset: f64,
    pub flags: RecordFlags,
}

impl From<&ReplicationRecord> for CoverageRow {
    fn from(r: &ReplicationRecord) -> Self {
        CoverageRow {
            replication: r.replication,
            estimator: r.estimator.clone(),
            coverage: r.coverage,
            scaled_length: r.scaled_length,
            tau_hat: r.tau_hat,
            lower_offset: r.lower_offset,
            upper_offset: r.upper_offset,
            flags: r.flags,
        }
    }
}

impl CoverageRow {
    /// Bitwise equality, treating NaN as equal to itself.
    pub fn same_bits(&self, other: &CoverageRow) -> bool {
        let floats = |r: &CoverageRow| {
            [
                r.coverage,
                r.scaled_length,
                r.tau_hat,
                r.lower_offset,
                r.upper_offset,
            ]
            .map(f64::to_bits)
        };
        self.replication == other.replication
            && self.estimator == other.estimator
            && self.flags == other.flags
            && floats(self) == floats(other)
    }
}

pub fn read_coverage(path: &Path) -> Result<Vec<CoverageRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let bad =
            |what: &str| Error::Config(format!("{}: row {}: bad {what}", path.display(), line + 2));
        let num = |i: usize, what: &str| -> Result<f64> {
            record[i].parse::<f64>().map_err(|_| bad(what))
        };
        rows.push(CoverageRow {
            replication: record[0].parse().map_err(|_| bad("replication"))?,
            estimator: record[1].to_string(),
            coverage: num(2, "coverage")?,
            scaled_length: num(3, "scaled_length")?,
            tau_hat: num(4, "tau_hat")?,
            lower_offset: num(5, "lower_offset")?,
            upper_offset: num(6, "upper_offset")?,
            flags: RecordFlags::parse(&record[7]).ok_or_else(|| bad("flags"))?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// SHA-256 of the config file bytes.
    pub config_hash: String,
    pub master_seed: u64,
    pub tool_version: String,
    pub started_at: String,
    pub finished_at: String,
    pub jobs: Option<usize>,
    pub outputs: Vec<String>,
}
