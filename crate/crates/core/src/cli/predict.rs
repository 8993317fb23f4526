use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::report::{fmt_full, write_atomic};
use super::{CliError, KindArg, PredictArgs, SideArg};
use crate::error::Error;
use crate::estimators::EstimatorSpec;
use crate::intervals::{build_split_interval, LooPredictor, PredictionInterval, Sidedness};

fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record =
            record.map_err(|e| CliError::Input(format!("{}: line {line}: {e}", path.display())))?;
        if record.len() != header.len() {
            return Err(CliError::Input(format!(
                "{}: line {line}: expected {} fields, found {}",
                path.display(),
                header.len(),
                record.len()
            )));
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(j, cell)| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        CliError::Input(format!(
                            "{}: line {line}, column '{}': '{cell}' is not a finite number",
                            path.display(),
                            header[j]
                        ))
                    })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

/// Reads a training CSV: header row, response in the first column.
pub fn read_data_csv(path: &Path) -> Result<(DMatrix<f64>, DVector<f64>), CliError> {
    let (header, rows) = read_numeric_csv(path)?;
    if header.len() < 2 {
        return Err(CliError::Input(format!(
            "{}: need a response and at least one feature",
            path.display()
        )));
    }
    if rows.len() < 2 {
        return Err(CliError::Input(format!(
            "{}: need at least 2 observations, found {}",
            path.display(),
            rows.len()
        )));
    }
    let p = header.len() - 1;
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|r| r[0]));
    let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j + 1]);
    Ok((x, y))
}

/// Reads feature vectors, one per row, expecting `p` columns.
pub fn read_x0_csv(path: &Path, p: usize) -> Result<Vec<DVector<f64>>, CliError> {
    let (header, rows) = read_numeric_csv(path)?;
    if header.len() != p {
        return Err(CliError::Input(format!(
            "{}: expected {p} feature columns to match the data, found {}",
            path.display(),
            header.len()
        )));
    }
    if rows.is_empty() {
        return Err(CliError::Input(format!(
            "{}: no feature vectors",
            path.display()
        )));
    }
    Ok(rows.into_iter().map(DVector::from_vec).collect())
}

fn estimator_from_args(args: &PredictArgs) -> Result<EstimatorSpec, CliError> {
    let need = |value: Option<f64>, flag: &str, name: &str| {
        value.ok_or_else(|| CliError::Input(format!("estimator {name} requires {flag}")))
    };
    let spec = match args.estimator {
        KindArg::Ols => EstimatorSpec::ols(),
        KindArg::Ridge => EstimatorSpec::ridge(need(args.lambda, "--lambda", "ridge")?),
        KindArg::Lasso => EstimatorSpec::lasso(need(args.lambda, "--lambda", "lasso")?),
        KindArg::Huber => EstimatorSpec::huber(need(args.huber_k, "--huber-k", "huber")?),
        KindArg::JamesStein => {
            EstimatorSpec::james_stein(need(args.js_c, "--js-c", "james-stein")?)
        }
    };
    spec.validate()
        .map_err(|e| CliError::Input(e.to_string()))?;
    Ok(spec)
}

#[derive(Debug, Clone)]
pub struct PredictOutput {
    pub intervals: Vec<PredictionInterval>,
    /// `row,point,lower,upper` lines as printed.
    pub table: String,
}

fn runtime(e: Error) -> CliError {
    match e {
        Error::InvalidParameter { .. } => CliError::Input(e.to_string()),
        other => CliError::Runtime(other.to_string()),
    }
}

pub fn predict(args: &PredictArgs) -> Result<PredictOutput, CliError> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(CliError::Input(format!(
            "--alpha must lie in (0, 1), got {}",
            args.alpha
        )));
    }
    let spec = estimator_from_args(args)?;
    let (x, y) = read_data_csv(&args.data)?;
    let points = read_x0_csv(&args.x0, x.ncols())?;
    let sidedness = match args.one_sided {
        None => Sidedness::TwoSided,
        Some(SideArg::Lower) => Sidedness::LowerOnly,
        Some(SideArg::Upper) => Sidedness::UpperOnly,
    };

    let intervals = match args.split {
        Some(nu) => points
            .iter()
            .map(|x0| build_split_interval(&spec, &x, &y, x0, nu, args.alpha, sidedness))
            .collect::<Result<Vec<_>, _>>()
            .map_err(runtime)?,
        None => {
            let predictor = LooPredictor::fit(&spec, &x, &y).map_err(runtime)?;
            if !predictor.fit.converged || predictor.loo.unconverged_refits > 0 {
                log::warn!(
                    "{} did not converge within {} iterations",
                    spec.kind,
                    spec.max_iterations
                );
            }
            points
                .iter()
                .map(|x0| predictor.interval(x0, args.alpha, sidedness))
                .collect::<Result<Vec<_>, _>>()
                .map_err(runtime)?
        }
    };

    let mut table = String::from("row,point,lower,upper\n");
    for (i, pi) in intervals.iter().enumerate() {
        let _ = writeln!(table, "{},{},{},{}", i + 1, pi.point, pi.lower, pi.upper);
    }
    if let Some(path) = &args.output {
        let mut csv_text = String::from("row,point,lower,upper,alpha\n");
        for (i, pi) in intervals.iter().enumerate() {
            let _ = writeln!(
                csv_text,
                "{},{},{},{},{}",
                i + 1,
                fmt_full(pi.point),
                fmt_full(pi.lower),
                fmt_full(pi.upper),
                pi.alpha
            );
        }
        let dir = path
            .parent()
            .filter(|d| !d.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| CliError::Input(format!("invalid output path {}", path.display())))?;
        write_atomic(dir, name, csv_text.as_bytes())
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    Ok(PredictOutput { intervals, table })
}
