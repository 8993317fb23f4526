//! Acceptance checks. Runs without the libtest harness so that every check
//! prints one `[PASS]`/`[FAIL]` line; exits non-zero if any check fails.
//!
//! `cargo test -p loopi --test acceptance [-- FILTER...]` runs the checks
//! whose function name contains one of the filters.

use std::fs;
use std::panic;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use loopi::cli::{run, RunArgs};
use loopi::dgp::{Design, DesignSpec, ModelInstance, UDist, VDist};
use loopi::estimators::EstimatorSpec;
use loopi::intervals::{
    empirical_quantile, loo_residuals_generic, loo_residuals_hat_shortcut, Band, LooPredictor,
    Sidedness,
};
use loopi::rng::{substream, Purpose, Stream};
use loopi::validation::{
    estimate_tau, lp_norm_diagnostic, mean, median, perturbation_norm, projection_normality_ks,
    spectral_diagnostics, std_error, ExperimentConfig,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

struct Check {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn verdict(id: &'static str, pass: bool, detail: String) -> Vec<Check> {
    vec![Check { id, pass, detail }]
}

fn gaussian_matrix(n: usize, p: usize, rng: &mut Stream) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(rng))
}

fn c01_shortcut_matches_brute_force() -> Vec<Check> {
    let mut rng = Stream::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(10..=100);
        let p = rng.random_range(1..n);
        let x = gaussian_matrix(n, p, &mut rng);
        let y = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let lambda = 10f64.powf(rng.random_range(-2.0..2.0));
        for spec in [EstimatorSpec::ols(), EstimatorSpec::ridge(lambda)] {
            let fast = loo_residuals_hat_shortcut(&spec, &x, &y).unwrap();
            let slow = loo_residuals_generic(&spec, &x, &y).unwrap();
            for (a, b) in fast.values.iter().zip(&slow.values) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    verdict(
        "1",
        worst < 1e-8,
        format!("max |shortcut - brute force| = {worst:.3e} (< 1e-8) over 200 instances"),
    )
}

fn tau_config(n: usize, p: usize) -> ExperimentConfig {
    let mut config = ExperimentConfig::new(n, p, vec![EstimatorSpec::ols()], 0.1, 50);
    config.seed = 202;
    config
}

fn c02_least_squares_tau_formula() -> Vec<Check> {
    let half = estimate_tau(&EstimatorSpec::ols(), &tau_config(400, 200), 50).unwrap();
    let fifth = estimate_tau(&EstimatorSpec::ols(), &tau_config(500, 100), 50).unwrap();
    let ok_half = (half.mean - 1.0).abs() < 0.1;
    let ok_fifth = (fifth.mean - 0.5).abs() < 0.05;
    verdict(
        "2",
        ok_half && ok_fifth,
        format!(
            "mean tau_hat = {:.4} at (400,200) [target 1.0 ± 0.1], {:.4} at (500,100) [target 0.5 ± 0.05]",
            half.mean, fifth.mean
        ),
    )
}

fn gaussian_design(n: usize, p: usize, seed: u64, draw: u64) -> DMatrix<f64> {
    let design = Design::new(DesignSpec::gaussian(n, p)).unwrap();
    design.sample_design(&mut substream(seed, draw, Purpose::Design))
}

fn c03_trace_limits() -> Vec<Check> {
    let traces: Vec<f64> = (0..20)
        .map(|r| spectral_diagnostics(&gaussian_design(1000, 500, 303, r)).trace_pinv)
        .collect();
    let trace_mean = mean(&traces);
    let sq: Vec<f64> = [(500, 8), (1000, 4), (2000, 2)]
        .iter()
        .map(|&(n, draws)| {
            let v: Vec<f64> = (0..draws)
                .map(|r| spectral_diagnostics(&gaussian_design(n, n / 2, 304, r)).trace_pinv_sq)
                .collect();
            mean(&v)
        })
        .collect();
    let ok_trace = (trace_mean - 1.0).abs() < 0.1;
    let ok_sq = sq.iter().all(|&v| v < 0.01) && sq[0] > sq[1] && sq[1] > sq[2];
    verdict(
        "3",
        ok_trace && ok_sq,
        format!(
            "mean trace (X'X)^+ = {trace_mean:.4} [1.0 ± 10%]; trace (X'X)^+2 at n=500/1000/2000 = {:.5}/{:.5}/{:.5} [< 0.01, decreasing]",
            sq[0], sq[1], sq[2]
        ),
    )
}

fn c04_bai_yin_floor() -> Vec<Check> {
    let lambda_min = spectral_diagnostics(&gaussian_design(2000, 1000, 404, 0)).lambda_min;
    let target = (1.0 - 0.5f64.sqrt()).powi(2);
    let rel = (lambda_min - target).abs() / target;
    verdict(
        "4",
        rel < 0.15,
        format!(
            "lambda_min(X'X/n) = {lambda_min:.5} vs {target:.5} (relative gap {rel:.3} < 0.15)"
        ),
    )
}

fn write_config(
    dir: &Path,
    name: &str,
    n: usize,
    p: usize,
    alpha: f64,
    u_dist: &str,
) -> std::path::PathBuf {
    let text = format!(
        r#"seed = 505
alpha = {alpha}
replications = 100
prediction_draws = 2000

[design]
n = {n}
p = {p}
u_dist = {u_dist}

[[estimators]]
kind = "ols"

[diagnostics]
perturbation = false
"#
    );
    let path = dir.join(format!("{name}.toml"));
    fs::write(&path, text).unwrap();
    path
}

fn run_twice(dir: &Path, name: &str, config: &Path) -> (loopi::cli::RunOutcome, bool) {
    let parallel = dir.join(format!("{name}-jobs8"));
    let serial = dir.join(format!("{name}-jobs1"));
    let outcome = run(&RunArgs {
        config: config.to_path_buf(),
        out: parallel.clone(),
        seed: None,
        jobs: Some(8),
    })
    .unwrap();
    run(&RunArgs {
        config: config.to_path_buf(),
        out: serial.clone(),
        seed: None,
        jobs: Some(1),
    })
    .unwrap();
    let identical = ["coverage.csv", "diagnostics.csv", "summary.csv"]
        .iter()
        .all(|f| fs::read(parallel.join(f)).unwrap() == fs::read(serial.join(f)).unwrap());
    (outcome, identical)
}

/// Criteria 5, 6 and 10 share their runs: each configuration is executed
/// with 8 workers and again with 1, and the CSV outputs are compared.
fn c05_c06_c10_honesty_length_and_determinism() -> Vec<Check> {
    let dir = tempfile::tempdir().unwrap();
    let normal = write_config(
        dir.path(),
        "honesty-normal",
        500,
        250,
        0.1,
        r#"{ kind = "normal" }"#,
    );
    let t5 = write_config(
        dir.path(),
        "honesty-t5",
        500,
        250,
        0.1,
        r#"{ kind = "student-t", df = 5.0 }"#,
    );
    let long = write_config(
        dir.path(),
        "length-half",
        500,
        250,
        0.05,
        r#"{ kind = "normal" }"#,
    );
    let short = write_config(
        dir.path(),
        "length-small-p",
        2000,
        5,
        0.05,
        r#"{ kind = "normal" }"#,
    );

    let mut identical = Vec::new();
    let mut gaps = Vec::new();
    for (name, path) in [("honesty-normal", &normal), ("honesty-t5", &t5)] {
        let (outcome, same) = run_twice(dir.path(), name, path);
        identical.push((name, same));
        gaps.push((name, outcome.report.summaries[0].honesty_gap));
    }
    let mut lengths = Vec::new();
    for (name, path, target, tol) in [
        ("length-half", &long, 5.5437, 0.05),
        ("length-small-p", &short, 3.9199, 0.03),
    ] {
        let (outcome, same) = run_twice(dir.path(), name, path);
        identical.push((name, same));
        lengths.push((name, outcome.report.summaries[0].scaled_length, target, tol));
    }

    let gap_ok = gaps.iter().all(|(_, g)| g.value < 0.03);
    let gap_text: Vec<String> = gaps
        .iter()
        .map(|(n, g)| format!("{n}: {:.4} (se {:.4})", g.value, g.std_error))
        .collect();
    let length_ok = lengths
        .iter()
        .all(|(_, l, target, tol)| (l.value - target).abs() / target < *tol);
    let length_text: Vec<String> = lengths
        .iter()
        .map(|(n, l, target, tol)| {
            format!(
                "{n}: {:.4} vs {target} (rel {:.4} < {tol})",
                l.value,
                (l.value - target).abs() / target
            )
        })
        .collect();
    let det_ok = identical.iter().all(|(_, same)| *same);

    vec![
        Check {
            id: "5",
            pass: gap_ok,
            detail: format!("honesty gap < 0.03; {}", gap_text.join("; ")),
        },
        Check {
            id: "6",
            pass: length_ok,
            detail: format!("mean scaled length; {}", length_text.join("; ")),
        },
        Check {
            id: "10",
            pass: det_ok,
            detail: format!("--jobs 1 vs --jobs 8 byte-identical CSVs: {identical:?}"),
        },
    ]
}

fn c07_condition_diagnostics_shrink_with_n() -> Vec<Check> {
    let ns = [200, 400, 800];
    let mut medians = Vec::new();
    let mut l4_means = Vec::new();
    for &n in &ns {
        let mut config = ExperimentConfig::new(n, n / 2, vec![EstimatorSpec::ols()], 0.1, 50);
        config.seed = 707;
        let l4 = lp_norm_diagnostic(&EstimatorSpec::ols(), &config, 2.0).unwrap();
        l4_means.push(mean(&l4));

        let design = config.realize_design().unwrap();
        let beta = DVector::zeros(n / 2);
        let norms: Vec<f64> = (0..config.replications as u64)
            .map(|r| {
                let inst = ModelInstance::generate(&design, &beta, 1.0, config.seed, r).unwrap();
                perturbation_norm(
                    &EstimatorSpec::ols(),
                    &inst.x,
                    &inst.y,
                    &inst.sigma_sqrt,
                    inst.sigma,
                )
                .unwrap()
            })
            .collect();
        medians.push(median(&norms));
    }
    let ok = medians[0] > medians[1]
        && medians[1] > medians[2]
        && l4_means[0] > l4_means[1]
        && l4_means[1] > l4_means[2];
    verdict(
        "7",
        ok,
        format!(
            "median perturbation norm {:.4}/{:.4}/{:.4}, mean l4 norm {:.4}/{:.4}/{:.4} at n = 200/400/800 (strictly decreasing)",
            medians[0], medians[1], medians[2], l4_means[0], l4_means[1], l4_means[2]
        ),
    )
}

fn c08a_clt_for_spread_projection() -> Vec<Check> {
    let p = 400;
    let b = DVector::from_element(p, 1.0 / (p as f64).sqrt());
    let ks = projection_normality_ks(
        &b,
        &VDist::Rademacher,
        100_000,
        &mut substream(808, 0, Purpose::Diagnostic),
    )
    .unwrap();
    verdict(
        "8 (spread b)",
        ks < 0.05,
        format!("KS distance {ks:.4} < 0.05 for b = 1/sqrt(p), Rademacher v, p = 400"),
    )
}

fn c08b_no_clt_for_coordinate_projection() -> Vec<Check> {
    let mut b = DVector::zeros(400);
    b[0] = 1.0;
    let ks = projection_normality_ks(
        &b,
        &VDist::Rademacher,
        100_000,
        &mut substream(808, 1, Purpose::Diagnostic),
    )
    .unwrap();
    verdict(
        "8 (b = e1)",
        ks > 0.4,
        format!("KS distance {ks:.4} > 0.4 for b = e1, Rademacher v"),
    )
}

fn c09_quantile_and_interval_properties() -> Vec<Check> {
    let mut rng = Stream::seed_from_u64(909);
    // Sort-and-scan oracle: first order statistic whose empirical cdf reaches t.
    let mut mismatches = 0;
    for _ in 0..1000 {
        let m = rng.random_range(1..60);
        let sample: Vec<f64> = (0..m)
            .map(|_| (rng.random_range(-5i32..5) as f64) * 0.5)
            .collect();
        let mut sorted = sample.clone();
        sorted.sort_by(f64::total_cmp);
        for k in 1..20 {
            let t = k as f64 / 20.0;
            let oracle = (0..m)
                .find(|&i| (i + 1) as f64 / m as f64 >= t)
                .map(|i| sorted[i])
                .unwrap();
            if empirical_quantile(&sample, t).unwrap() != oracle {
                mismatches += 1;
            }
        }
    }

    // Nesting in alpha on one residual sample.
    let residuals: Vec<f64> = (0..200).map(|_| StandardNormal.sample(&mut rng)).collect();
    let alphas = [0.01, 0.05, 0.1, 0.2, 0.5, 0.9];
    let bands: Vec<Band> = alphas
        .iter()
        .map(|&a| Band::from_residuals(&residuals, a, Sidedness::TwoSided).unwrap())
        .collect();
    let nested = bands
        .windows(2)
        .all(|w| w[0].lower <= w[1].lower && w[1].upper <= w[0].upper);

    // Translation equivariance for least squares.
    let x = gaussian_matrix(80, 10, &mut rng);
    let y = DVector::from_fn(80, |_, _| StandardNormal.sample(&mut rng));
    let delta = DVector::from_fn(10, |_, _| StandardNormal.sample(&mut rng));
    let x0 = DVector::from_fn(10, |_, _| StandardNormal.sample(&mut rng));
    let base = LooPredictor::fit(&EstimatorSpec::ols(), &x, &y).unwrap();
    let moved = LooPredictor::fit(&EstimatorSpec::ols(), &x, &(&y + &x * &delta)).unwrap();
    let a = base.interval(&x0, 0.1, Sidedness::TwoSided).unwrap();
    let b = moved.interval(&x0, 0.1, Sidedness::TwoSided).unwrap();
    let shift = x0.dot(&delta);
    let resid_gap = base
        .loo
        .values
        .iter()
        .zip(&moved.loo.values)
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max);
    let equivariant = (b.lower - a.lower - shift).abs() < 1e-9
        && (b.upper - a.upper - shift).abs() < 1e-9
        && resid_gap < 1e-9;

    // Asymmetry under centered exponential errors.
    let mut config = ExperimentConfig::new(400, 40, vec![EstimatorSpec::ols()], 0.1, 40);
    config.seed = 910;
    config.design.u_dist = UDist::CenteredExponential;
    let design = config.realize_design().unwrap();
    let beta = DVector::zeros(40);
    let skews: Vec<f64> = (0..config.replications as u64)
        .map(|r| {
            let inst = ModelInstance::generate(&design, &beta, 1.0, config.seed, r).unwrap();
            let band = LooPredictor::fit(&EstimatorSpec::ols(), &inst.x, &inst.y)
                .unwrap()
                .band(0.1, Sidedness::TwoSided)
                .unwrap();
            // upper margin minus lower margin
            band.upper + band.lower
        })
        .collect();
    let (skew, skew_se) = (mean(&skews), std_error(&skews));
    let asymmetric = skew.abs() > 3.0 * skew_se;

    verdict(
        "9",
        mismatches == 0 && nested && equivariant && asymmetric,
        format!(
            "quantile oracle mismatches {mismatches}/19000; nesting {nested}; translation equivariance {equivariant}; \
             margin asymmetry {skew:.4} (se {skew_se:.4}, > 3 se: {asymmetric})"
        ),
    )
}

type Criterion = (&'static str, fn() -> Vec<Check>);

const CRITERIA: [Criterion; 9] = [
    (
        "c01_shortcut_matches_brute_force",
        c01_shortcut_matches_brute_force,
    ),
    (
        "c02_least_squares_tau_formula",
        c02_least_squares_tau_formula,
    ),
    ("c03_trace_limits", c03_trace_limits),
    ("c04_bai_yin_floor", c04_bai_yin_floor),
    (
        "c05_c06_c10_honesty_length_and_determinism",
        c05_c06_c10_honesty_length_and_determinism,
    ),
    (
        "c07_condition_diagnostics_shrink_with_n",
        c07_condition_diagnostics_shrink_with_n,
    ),
    (
        "c08a_clt_for_spread_projection",
        c08a_clt_for_spread_projection,
    ),
    (
        "c08b_no_clt_for_coordinate_projection",
        c08b_no_clt_for_coordinate_projection,
    ),
    (
        "c09_quantile_and_interval_properties",
        c09_quantile_and_interval_properties,
    ),
];

fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    let mut total = 0;
    for (name, check) in CRITERIA {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let started = Instant::now();
        let checks = panic::catch_unwind(check).unwrap_or_else(|payload| {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_default();
            verdict("?", false, format!("{name} panicked: {message}"))
        });
        let seconds = started.elapsed().as_secs_f64();
        for c in checks {
            total += 1;
            failed += usize::from(!c.pass);
            let tag = if c.pass { "PASS" } else { "FAIL" };
            println!(
                "[{tag}] criterion {}: {} ({name}, {seconds:.1}s)",
                c.id, c.detail
            );
        }
    }
    println!("acceptance: {} passed, {failed} failed", total - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
