use std::ffi::CStr;
use std::ptr;

use causal_gap_ffi::*;

fn last_error() -> String {
    let p = cg_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(cg_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn closed_form_ratio() {
    let mut g = CgGap::default();
    assert_eq!(unsafe { cg_ratio_uniform_linear(3.0, &mut g) }, CgStatus::Ok);
    assert!((g.exp_delta_sq - 50.0 / 54.0).abs() < 1e-12);
    assert_eq!(unsafe { cg_ratio_uniform_linear(f64::NAN, &mut g) }, CgStatus::Domain);
    assert!(!last_error().is_empty());
    assert_eq!(
        unsafe { cg_ratio_uniform_linear(1.0, ptr::null_mut()) },
        CgStatus::InvalidArgument
    );
}

#[test]
fn model_handle_round_trip() {
    let mut m: *mut CgModel = ptr::null_mut();
    let st = unsafe {
        cg_model_new(
            CgNoiseKind::Uniform as u32,
            1.0,
            CgMechanismKind::Linear as u32,
            2.0,
            0.0,
            CgNoiseKind::Uniform as u32,
            1.0,
            &mut m,
        )
    };
    assert_eq!(st, CgStatus::Ok);
    let mut g = CgGap::default();
    assert_eq!(
        unsafe { cg_population_gap(m, CgFit::Homoskedastic as u32, &mut g) },
        CgStatus::Ok
    );
    assert!((g.exp_delta_sq - 0.9375).abs() < 1e-6);
    assert_eq!(unsafe { cg_population_gap(m, 7, &mut g) }, CgStatus::InvalidArgument);
    assert!(last_error().contains("fit"));
    unsafe { cg_model_free(m) };
    unsafe { cg_model_free(ptr::null_mut()) };

    let st = unsafe { cg_model_new(0, 1.0, 9, 1.0, 1.0, 0, 1.0, &mut m) };
    assert_eq!(st, CgStatus::InvalidArgument);
}

#[test]
fn direction_and_smoother() {
    let n = 400;
    let x: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect();
    // Deterministic pseudo-noise keeps the test free of an RNG dependency.
    let y: Vec<f64> = x
        .iter()
        .enumerate()
        .map(|(i, v)| 2.0 * v + 0.3 * (((i * 7919) % 997) as f64 / 997.0 - 0.5))
        .collect();
    let mut r = CgDirectionResult {
        score_fwd: 0.0,
        score_bwd: 0.0,
        exp_delta_sq_hat: 0.0,
        decision: CgDirection::Tie,
    };
    let st = unsafe { cg_gaussian_direction(x.as_ptr(), y.as_ptr(), n, 0, &mut r) };
    assert_eq!(st, CgStatus::Ok);
    assert!(r.exp_delta_sq_hat.is_finite() && r.exp_delta_sq_hat > 0.0);

    let mut s: *mut CgSmoother = ptr::null_mut();
    assert_eq!(
        unsafe { cg_smoother_fit(x.as_ptr(), y.as_ptr(), n, &mut s) },
        CgStatus::Ok
    );
    assert!(unsafe { cg_smoother_bandwidth(s) } > 0.0);
    let q = [0.0, 0.5];
    let mut out = [0.0; 2];
    assert_eq!(
        unsafe { cg_smoother_predict(s, q.as_ptr(), 2, out.as_mut_ptr()) },
        CgStatus::Ok
    );
    assert!((out[1] - 1.0).abs() < 0.1, "{out:?}");
    unsafe { cg_smoother_free(s) };

    let st = unsafe { cg_smoother_fit(x.as_ptr(), y.as_ptr(), 5, &mut s) };
    assert_eq!(st, CgStatus::Domain);
    assert_eq!(
        unsafe { cg_gaussian_direction(ptr::null(), y.as_ptr(), n, 0, &mut r) },
        CgStatus::InvalidArgument
    );
}

#[test]
fn hsic_detects_dependence() {
    let n = 200;
    let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
    let y: Vec<f64> = x.iter().map(|v| v * v).collect();
    let mut h = CgHsic::default();
    assert_eq!(
        unsafe { cg_hsic_test(x.as_ptr(), y.as_ptr(), n, 199, 3, &mut h) },
        CgStatus::Ok
    );
    assert!(h.p_value <= 0.01);
    assert_eq!(h.n_used, n);
}

#[test]
fn sem_permutation_totals_agree() {
    let betas = [0.8, -1.3];
    let mut sem: *mut CgSem = ptr::null_mut();
    assert_eq!(
        unsafe { cg_sem_chain(betas.as_ptr(), 3, CgNoiseKind::Uniform as u32, 1.0, &mut sem) },
        CgStatus::Ok
    );
    let truth = unsafe { cg_sem_true_total(sem) };
    for perm in [[0usize, 1, 2], [2, 1, 0], [1, 2, 0]] {
        let mut t = 0.0;
        assert_eq!(
            unsafe { cg_sem_permutation_total(sem, perm.as_ptr(), 3, &mut t) },
            CgStatus::Ok
        );
        assert!((t - truth).abs() < 1e-10);
    }
    let bad = [0usize, 0, 1];
    let mut t = 0.0;
    assert_ne!(
        unsafe { cg_sem_permutation_total(sem, bad.as_ptr(), 3, &mut t) },
        CgStatus::Ok
    );
    unsafe { cg_sem_free(sem) };
}

#[test]
fn header_is_valid_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/causal_gap.h");
    let text = std::fs::read_to_string(header).unwrap();
    for sym in ["cg_population_gap", "cg_hsic_test", "cg_smoother_free", "CG_STATUS_OK"] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
    match std::process::Command::new("cc")
        .args(["-fsyntax-only", "-x", "c", header])
        .status()
    {
        Ok(st) => assert!(st.success(), "header does not compile"),
        Err(_) => eprintln!("warning: no C compiler found, syntax check skipped"),
    }
}
