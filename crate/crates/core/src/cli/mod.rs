//! Command-line front end: `run` executes a configured experiment, `predict`
//! builds intervals for user data.

mod predict;
pub mod report;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::validation::{run_experiment, ExperimentConfig, ExperimentReport};
use report::{
    coverage_csv, diagnostics_csv, fmt_short, summary_csv, write_atomic, RunManifest,
    COVERAGE_FILE, DIAGNOSTICS_FILE, MANIFEST_FILE, SUMMARY_FILE,
};

pub use predict::{predict, read_data_csv, read_x0_csv, PredictOutput};

#[derive(Debug, Parser)]
#[command(
    name = "loopi",
    version,
    about = "Leave-one-out prediction intervals for linear regression"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a Monte Carlo experiment described by a TOML config file.
    Run(RunArgs),
    /// Fit an estimator to a CSV data set and print prediction intervals.
    Predict(PredictArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Override the master seed from the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Ols,
    Ridge,
    Lasso,
    Huber,
    JamesStein,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SideArg {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    /// CSV with a header; first column is the response, the rest are features.
    #[arg(long)]
    pub data: PathBuf,
    /// CSV with a header; one feature vector per row.
    #[arg(long)]
    pub x0: PathBuf,
    #[arg(long, value_enum)]
    pub estimator: KindArg,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long = "huber-k")]
    pub huber_k: Option<f64>,
    #[arg(long = "js-c")]
    pub js_c: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    /// Fit on the first ⌈νn⌉ rows and use holdout residuals instead of leave-one-out.
    #[arg(long)]
    pub split: Option<f64>,
    #[arg(long = "one-sided", value_enum)]
    pub one_sided: Option<SideArg>,
    /// Also write the intervals to this CSV file.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// A failed command with its process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad config, flags or input files (exit 1).
    #[error("{0}")]
    Input(String),
    /// Estimation failed at run time (exit 2).
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => run(&args).map(|outcome| println!("{}", outcome.summary_text)),
        Command::Predict(args) => {
            let output = predict(&args)?;
            print!("{}", output.table);
            Ok(())
        }
    }
}

pub fn load_config(path: &Path) -> Result<(ExperimentConfig, Vec<u8>), CliError> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| CliError::Input(format!("{} is not valid UTF-8", path.display())))?;
    let config: ExperimentConfig = toml::from_str(&text)
        .map_err(|e| CliError::Input(format!("config error in {}: {e}", path.display())))?;
    Ok((config, bytes))
}

#[derive(Debug)]
pub struct RunOutcome {
    pub report: ExperimentReport,
    pub manifest: RunManifest,
    pub summary_text: String,
}

/// Runs an experiment and writes `coverage.csv`, `diagnostics.csv`,
/// `summary.csv` and `manifest.json` into `args.out`.
///
/// Outputs are written even when the failure budget is exceeded; the error
/// is returned afterwards.
pub fn run(args: &RunArgs) -> Result<RunOutcome, CliError> {
    let started_at = chrono::Utc::now().to_rfc3339();
    let (mut config, bytes) = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config
        .validate()
        .map_err(|e| CliError::Input(format!("config error in {}: {e}", args.config.display())))?;
    if args.jobs == Some(0) {
        return Err(CliError::Input("--jobs must be at least 1".into()));
    }

    let report = run_experiment(&config, args.jobs).map_err(|e| match e {
        Error::InvalidParameter { .. }
        | Error::NotPositiveDefinite { .. }
        | Error::DimensionMismatch { .. } => {
            CliError::Input(format!("config error in {}: {e}", args.config.display()))
        }
        other => CliError::Runtime(other.to_string()),
    })?;

    let io = |e: Error| CliError::Runtime(format!("writing outputs: {e}"));
    fs::create_dir_all(&args.out).map_err(|e| io(e.into()))?;
    let files = [
        (COVERAGE_FILE, coverage_csv(&report.records).map_err(io)?),
        (
            DIAGNOSTICS_FILE,
            diagnostics_csv(&report.records, &report.spectral).map_err(io)?,
        ),
        (SUMMARY_FILE, summary_csv(&report).map_err(io)?),
    ];
    let mut outputs = Vec::new();
    for (name, content) in &files {
        write_atomic(&args.out, name, content).map_err(io)?;
        outputs.push(name.to_string());
    }
    outputs.push(MANIFEST_FILE.to_string());
    let manifest = RunManifest {
        config_hash: hex_digest(&bytes),
        master_seed: config.seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        started_at,
        finished_at: chrono::Utc::now().to_rfc3339(),
        jobs: args.jobs,
        outputs,
    };
    let json =
        serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_atomic(&args.out, MANIFEST_FILE, &json).map_err(io)?;

    let summary_text = render_summary(&report);
    let over = report.over_budget();
    if !over.is_empty() {
        let names: Vec<String> = over
            .iter()
            .map(|s| format!("{} ({} failures)", s.estimator, s.failures))
            .collect();
        eprintln!("{summary_text}");
        return Err(CliError::Runtime(format!(
            "failure budget of {:.1}% of {} replications exceeded: {}",
            100.0 * config.failure_budget,
            config.replications,
            names.join(", ")
        )));
    }
    Ok(RunOutcome {
        report,
        manifest,
        summary_text,
    })
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn render_summary(report: &ExperimentReport) -> String {
    let c = &report.config;
    let mut out = format!(
        "n = {}, p = {}, alpha = {}, R = {}, M = {}, seed = {}\n",
        c.design.n, c.design.p, c.alpha, c.replications, c.prediction_draws, c.seed
    );
    out.push_str(&format!(
        "{:<24} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>8}\n",
        "estimator", "coverage", "gap", "gap_se", "length", "oracle", "tau_hat", "failed"
    ));
    for s in &report.summaries {
        out.push_str(&format!(
            "{:<24} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>8}\n",
            s.estimator,
            fmt_short(s.coverage.value),
            fmt_short(s.honesty_gap.value),
            fmt_short(s.honesty_gap.std_error),
            fmt_short(s.scaled_length.value),
            fmt_short(s.oracle_length),
            fmt_short(s.tau_hat.value),
            s.failures
        ));
    }
    out
}
