//! Exercises the C entry points from Rust and from a compiled C program.

use std::ffi::CStr;
use std::path::Path;
use std::process::Command;
use std::ptr;

use loopi_ffi::*;

fn last_error() -> Option<String> {
    let p = loopi_last_error();
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
}

/// The two-row toy problem: X = [[1], [1]], Y = [0, 2].
fn toy_model(kind: LoopiEstimator, hyper: f64) -> *mut LoopiModel {
    let (x, y) = ([1.0, 1.0], [0.0, 2.0]);
    let mut model = ptr::null_mut();
    let status =
        unsafe { loopi_model_fit(x.as_ptr(), 2, 1, y.as_ptr(), kind as u32, hyper, &mut model) };
    assert_eq!(status, LoopiStatus::Ok, "{:?}", last_error());
    assert!(last_error().is_none());
    model
}

#[test]
fn fit_and_query_toy_model() {
    let model = toy_model(LoopiEstimator::Ols, 0.0);
    let (mut n, mut p) = (0, 0);
    unsafe {
        assert_eq!(loopi_model_dims(model, &mut n, &mut p), LoopiStatus::Ok);
        assert_eq!((n, p), (2, 1));

        let mut beta = [0.0];
        assert_eq!(
            loopi_model_coefficients(model, beta.as_mut_ptr(), 1),
            LoopiStatus::Ok
        );
        assert!((beta[0] - 1.0).abs() < 1e-12);

        let mut loo = [0.0; 2];
        assert_eq!(
            loopi_model_loo_residuals(model, loo.as_mut_ptr(), 2),
            LoopiStatus::Ok
        );
        assert!((loo[0] + 2.0).abs() < 1e-12 && (loo[1] - 2.0).abs() < 1e-12);

        let mut pi = LoopiInterval {
            lower: 0.0,
            upper: 0.0,
            point: 0.0,
            alpha: 0.0,
        };
        let x0 = [1.0];
        let side = LoopiSidedness::TwoSided as u32;
        assert_eq!(
            loopi_model_interval(model, x0.as_ptr(), 1, 0.5, side, &mut pi),
            LoopiStatus::Ok
        );
        assert!(
            (pi.lower + 1.0).abs() < 1e-12
                && (pi.upper - 3.0).abs() < 1e-12
                && (pi.point - 1.0).abs() < 1e-12
        );
        assert_eq!(pi.alpha, 0.5);

        let lower_only = LoopiSidedness::LowerOnly as u32;
        assert_eq!(
            loopi_model_interval(model, x0.as_ptr(), 1, 0.5, lower_only, &mut pi),
            LoopiStatus::Ok
        );
        // Lower-only uses the 0.5 quantile, the first order statistic -2.
        assert!(pi.upper.is_infinite() && (pi.lower + 1.0).abs() < 1e-12);
        loopi_model_free(model);
    }
}

#[test]
fn ridge_coefficient_matches_closed_form() {
    // beta = x'y / (x'x + lambda) = 2 / (2 + 2).
    let model = toy_model(LoopiEstimator::Ridge, 2.0);
    let mut beta = [0.0];
    unsafe {
        assert_eq!(
            loopi_model_coefficients(model, beta.as_mut_ptr(), 1),
            LoopiStatus::Ok
        );
        loopi_model_free(model);
    }
    assert!((beta[0] - 0.5).abs() < 1e-12);
}

#[test]
fn errors_set_status_and_message() {
    let (x, y) = ([1.0, 1.0], [0.0, 2.0]);
    let mut model = ptr::null_mut();
    unsafe {
        let s = loopi_model_fit(
            x.as_ptr(),
            2,
            1,
            y.as_ptr(),
            LoopiEstimator::Lasso as u32,
            -1.0,
            &mut model,
        );
        assert_eq!(s, LoopiStatus::InvalidArgument);
        assert!(model.is_null());
        assert!(last_error().unwrap().contains("lambda"));

        let s = loopi_model_fit(x.as_ptr(), 2, 1, y.as_ptr(), 99, 0.0, &mut model);
        assert_eq!(s, LoopiStatus::InvalidArgument);
        assert!(last_error().unwrap().contains("99"));

        let s = loopi_model_fit(ptr::null(), 2, 1, y.as_ptr(), 0, 0.0, &mut model);
        assert_eq!(s, LoopiStatus::NullPointer);

        // Two identical rows and p = 2: singular for least squares.
        let singular = [1.0, 2.0, 1.0, 2.0, 2.0, 4.0];
        let ys = [1.0, 2.0, 3.0];
        let s = loopi_model_fit(singular.as_ptr(), 3, 2, ys.as_ptr(), 0, 0.0, &mut model);
        assert_eq!(s, LoopiStatus::Ok, "{:?}", last_error());
        loopi_model_free(model);

        let model = toy_model(LoopiEstimator::Ols, 0.0);
        let mut short = [0.0; 1];
        assert_eq!(
            loopi_model_loo_residuals(model, short.as_mut_ptr(), 1),
            LoopiStatus::BufferSize
        );
        let mut pi = LoopiInterval {
            lower: 0.0,
            upper: 0.0,
            point: 0.0,
            alpha: 0.0,
        };
        let x0 = [1.0, 2.0];
        assert_eq!(
            loopi_model_interval(model, x0.as_ptr(), 2, 0.5, 0, &mut pi),
            LoopiStatus::InvalidArgument
        );
        assert_eq!(
            loopi_model_interval(model, x0.as_ptr(), 1, 1.5, 0, &mut pi),
            LoopiStatus::InvalidArgument
        );
        assert!(last_error().unwrap().contains("alpha"));
        assert_eq!(
            loopi_model_interval(model, x0.as_ptr(), 1, 0.5, 7, &mut pi),
            LoopiStatus::InvalidArgument
        );
        loopi_model_free(model);

        assert_eq!(
            loopi_model_dims(ptr::null(), ptr::null_mut(), ptr::null_mut()),
            LoopiStatus::NullPointer
        );
        loopi_model_free(ptr::null_mut());
    }
}

#[test]
fn split_interval_and_quantile() {
    // Fit on the first two rows gives beta = 1; holdout residuals are (0, 1).
    let (x, y, x0) = ([1.0, 2.0, 3.0, 4.0], [1.0, 2.0, 3.0, 5.0], [1.0]);
    let mut pi = LoopiInterval {
        lower: 0.0,
        upper: 0.0,
        point: 0.0,
        alpha: 0.0,
    };
    let s = unsafe {
        loopi_split_interval(
            x.as_ptr(),
            4,
            1,
            y.as_ptr(),
            0,
            0.0,
            x0.as_ptr(),
            0.5,
            0.5,
            0,
            &mut pi,
        )
    };
    assert_eq!(s, LoopiStatus::Ok, "{:?}", last_error());
    assert!((pi.lower - 1.0).abs() < 1e-12 && (pi.upper - 2.0).abs() < 1e-12);

    let s = unsafe {
        loopi_split_interval(
            x.as_ptr(),
            4,
            1,
            y.as_ptr(),
            0,
            0.0,
            x0.as_ptr(),
            1.0,
            0.5,
            0,
            &mut pi,
        )
    };
    assert_eq!(s, LoopiStatus::InvalidArgument);

    let sample = [3.0, 1.0, 2.0, 5.0, 4.0];
    let mut q = 0.0;
    assert_eq!(
        unsafe { loopi_empirical_quantile(sample.as_ptr(), 5, 0.3, &mut q) },
        LoopiStatus::Ok
    );
    assert_eq!(q, 2.0);
    assert_eq!(
        unsafe { loopi_empirical_quantile(sample.as_ptr(), 5, 0.0, &mut q) },
        LoopiStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { loopi_empirical_quantile(sample.as_ptr(), 0, 0.5, &mut q) },
        LoopiStatus::InvalidArgument
    );
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(loopi_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

/// Compiles `tests/smoke.c` against the generated header and the static
/// library, then runs it. Skipped when no C compiler is installed.
#[test]
fn c_program_links_and_runs() {
    let Some(cc) = ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok())
    else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    // Integration test binaries live in target/<profile>/deps; the library sits one level up.
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("libloopi_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let out_dir = tempfile::tempdir().unwrap();
    let bin = out_dir.path().join("smoke");
    let compile = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Wextra", "-Werror", "-o"])
        .arg(&bin)
        .arg(crate_dir.join("tests/smoke.c"))
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .output()
        .unwrap();
    assert!(
        compile.status.success(),
        "{}",
        String::from_utf8_lossy(&compile.stderr)
    );
    let run = Command::new(&bin).output().unwrap();
    assert!(
        run.status.success(),
        "{}{}",
        String::from_utf8_lossy(&run.stdout),
        String::from_utf8_lossy(&run.stderr)
    );
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "ok");
}
