//! C ABI over `causal_gap`.
//!
//! Every fallible function returns a [`CgStatus`] and writes results through
//! out-pointers. On failure the message is kept per thread and can be read
//! with [`cg_last_error`]. Objects cross the boundary as opaque handles that
//! must be released with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use causal_gap::npreg::{fit_mean, SmootherFit};
use causal_gap::population::{population_gap, ratio_uniform_linear, Fit, QuadratureConfig};
use causal_gap::scoring::{gaussian_direction, permutation_score_population, true_total, Direction};
use causal_gap::sem::{BivariateAnm, LinearSem, Mechanism, Permutation};
use causal_gap::specfun::NoiseSpec;
use causal_gap::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgStatus {
    Ok = 0,
    /// Null pointer, bad enum value, or other misuse of the interface.
    InvalidArgument = 1,
    /// Inputs outside the domain of the computation.
    Domain = 2,
    Numeric = 3,
    Io = 4,
    Unsupported = 5,
    /// A Rust panic was caught at the boundary.
    Internal = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgNoiseKind {
    /// Uniform on [-param, param].
    Uniform = 0,
    /// Centred Gaussian with variance `param`.
    Gaussian = 1,
    /// `(Z^2 - 1) / param` with Z standard normal.
    Chi1Centered = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgMechanismKind {
    Linear = 0,
    Power = 1,
    EvenPower = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgFit {
    Homoskedastic = 0,
    Heteroskedastic = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgDirection {
    Forward = 0,
    Backward = 1,
    Tie = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CgGap {
    pub delta: f64,
    pub exp_delta_sq: f64,
    /// Residual scales (cause, effect) of the causal fit.
    pub sigma_fwd: [f64; 2],
    /// Residual scales (effect, cause) of the anti-causal fit.
    pub sigma_bwd: [f64; 2],
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CgDirectionResult {
    pub score_fwd: f64,
    pub score_bwd: f64,
    pub exp_delta_sq_hat: f64,
    pub decision: CgDirection,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CgHsic {
    pub statistic: f64,
    pub p_value: f64,
    pub n_used: usize,
}

/// Opaque bivariate additive-noise model.
pub struct CgModel(BivariateAnm);
/// Opaque fitted local-linear smoother.
pub struct CgSmoother(SmootherFit);
/// Opaque linear structural equation model.
pub struct CgSem(LinearSem);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CgStatus {
    match e {
        Error::Domain(_) | Error::DegenerateInterval { .. } | Error::Parse { .. } => CgStatus::Domain,
        Error::Contract(_) => CgStatus::InvalidArgument,
        Error::Unsupported(_) => CgStatus::Unsupported,
        Error::ZeroDensity(_) | Error::Tolerance { .. } | Error::Numeric(_) => CgStatus::Numeric,
        Error::Fetch { .. } | Error::NotFound { .. } | Error::Io(_) => CgStatus::Io,
    }
}

/// Runs `f`, converting errors and panics into a status and a stored message.
fn guard(f: impl FnOnce() -> Result<(), (CgStatus, String)>) -> CgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CgStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            CgStatus::Internal
        }
    }
}

fn lib_err(e: Error) -> (CgStatus, String) {
    (status_of(&e), e.to_string())
}

fn invalid(msg: &str) -> (CgStatus, String) {
    (CgStatus::InvalidArgument, msg.to_string())
}

unsafe fn slice<'a>(p: *const f64, n: usize, name: &str) -> Result<&'a [f64], (CgStatus, String)> {
    if p.is_null() {
        return Err(invalid(&format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn write<T>(out: *mut T, value: T) -> Result<(), (CgStatus, String)> {
    if out.is_null() {
        return Err(invalid("output pointer is null"));
    }
    out.write(value);
    Ok(())
}

fn noise(kind: u32, param: f64) -> Result<NoiseSpec, (CgStatus, String)> {
    match kind {
        0 => Ok(NoiseSpec::uniform(param)),
        1 => Ok(NoiseSpec::gaussian(param)),
        2 => Ok(NoiseSpec::chi1(param)),
        _ => Err(invalid(&format!("unknown noise kind {kind}"))),
    }
}

fn fit(kind: u32) -> Result<Fit, (CgStatus, String)> {
    match kind {
        0 => Ok(Fit::Homoskedastic),
        1 => Ok(Fit::Heteroskedastic),
        _ => Err(invalid(&format!("unknown fit kind {kind}"))),
    }
}

/// Last error message on this thread, or null. Valid until the next failing
/// call on the same thread.
#[no_mangle]
pub extern "C" fn cg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cg_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(c) => c,
        Err(_) => panic!("version string"),
    };
    VERSION.as_ptr()
}

/// Closed-form gap for uniform cause and uniform noise with a linear mechanism.
///
/// # Safety
/// `out` must be null or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn cg_ratio_uniform_linear(beta: f64, out: *mut CgGap) -> CgStatus {
    guard(|| {
        let r = ratio_uniform_linear(beta).map_err(lib_err)?;
        write(
            out,
            CgGap {
                delta: r.delta,
                exp_delta_sq: r.exp_delta_sq,
                sigma_fwd: r.sigma_fwd,
                sigma_bwd: r.sigma_bwd,
            },
        )
    })
}

/// Builds a bivariate model. `mechanism` is a [`CgMechanismKind`]; `nu` is
/// ignored for linear mechanisms. Noise kinds are [`CgNoiseKind`] values.
///
/// # Safety
/// `out` must be null or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn cg_model_new(
    cause_kind: u32,
    cause_param: f64,
    mechanism: u32,
    beta: f64,
    nu: f64,
    noise_kind: u32,
    noise_param: f64,
    out: *mut *mut CgModel,
) -> CgStatus {
    guard(|| {
        let mech = match mechanism {
            0 => Mechanism::Linear { beta },
            1 => Mechanism::Power { beta, nu },
            2 => Mechanism::EvenPower { beta, nu },
            _ => return Err(invalid(&format!("unknown mechanism kind {mechanism}"))),
        };
        let model = BivariateAnm::new(noise(cause_kind, cause_param)?, mech, noise(noise_kind, noise_param)?);
        model.validate().map_err(lib_err)?;
        write(out, Box::into_raw(Box::new(CgModel(model))))
    })
}

/// # Safety
/// `model` must be null or a handle from [`cg_model_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cg_model_free(model: *mut CgModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Population gap of `model` under the given [`CgFit`], default quadrature settings.
///
/// # Safety
/// `model` must be a live handle; `out` must be null or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn cg_population_gap(model: *const CgModel, fit_kind: u32, out: *mut CgGap) -> CgStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| invalid("model is null"))?;
        let r = population_gap(&model.0, fit(fit_kind)?, &QuadratureConfig::default()).map_err(lib_err)?;
        write(
            out,
            CgGap {
                delta: r.delta,
                exp_delta_sq: r.exp_delta_sq,
                sigma_fwd: r.sigma_fwd,
                sigma_bwd: r.sigma_bwd,
            },
        )
    })
}

/// Sample-level direction scores for the pair (x, y) of length `n`.
///
/// # Safety
/// `x` and `y` must point to `n` readable doubles; `out` must be null or
/// valid for one write.
#[no_mangle]
pub unsafe extern "C" fn cg_gaussian_direction(
    x: *const f64,
    y: *const f64,
    n: usize,
    fit_kind: u32,
    out: *mut CgDirectionResult,
) -> CgStatus {
    guard(|| {
        let (x, y) = (slice(x, n, "x")?, slice(y, n, "y")?);
        let r = gaussian_direction(x, y, fit(fit_kind)?).map_err(lib_err)?;
        let decision = match r.decision {
            Direction::Forward => CgDirection::Forward,
            Direction::Backward => CgDirection::Backward,
            Direction::Tie => CgDirection::Tie,
        };
        write(
            out,
            CgDirectionResult {
                score_fwd: r.score_fwd,
                score_bwd: r.score_bwd,
                exp_delta_sq_hat: r.exp_delta_sq_hat,
                decision,
            },
        )
    })
}

/// Permutation HSIC test of independence between x and y.
///
/// # Safety
/// `x` and `y` must point to `n` readable doubles; `out` must be null or
/// valid for one write.
#[no_mangle]
pub unsafe extern "C" fn cg_hsic_test(
    x: *const f64,
    y: *const f64,
    n: usize,
    permutations: usize,
    seed: u64,
    out: *mut CgHsic,
) -> CgStatus {
    guard(|| {
        let (x, y) = (slice(x, n, "x")?, slice(y, n, "y")?);
        let r = causal_gap::hsic::hsic_test(x, y, permutations, seed).map_err(lib_err)?;
        write(
            out,
            CgHsic {
                statistic: r.statistic,
                p_value: r.p_value,
                n_used: r.n_used,
            },
        )
    })
}

/// Fits a local-linear regression of y on x with a leave-one-out bandwidth.
///
/// # Safety
/// `x` and `y` must point to `n` readable doubles; `out` must be null or
/// valid for one write.
#[no_mangle]
pub unsafe extern "C" fn cg_smoother_fit(
    x: *const f64,
    y: *const f64,
    n: usize,
    out: *mut *mut CgSmoother,
) -> CgStatus {
    guard(|| {
        let (x, y) = (slice(x, n, "x")?, slice(y, n, "y")?);
        let f = fit_mean(x, y).map_err(lib_err)?;
        write(out, Box::into_raw(Box::new(CgSmoother(f))))
    })
}

/// Evaluates the smoother at `m` points.
///
/// # Safety
/// `smoother` must be a live handle; `q` must point to `m` readable doubles
/// and `out` to `m` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cg_smoother_predict(
    smoother: *const CgSmoother,
    q: *const f64,
    m: usize,
    out: *mut f64,
) -> CgStatus {
    guard(|| {
        let s = smoother.as_ref().ok_or_else(|| invalid("smoother is null"))?;
        let q = slice(q, m, "q")?;
        if out.is_null() {
            return Err(invalid("output pointer is null"));
        }
        let out = std::slice::from_raw_parts_mut(out, m);
        for (o, &v) in out.iter_mut().zip(q) {
            *o = s.0.predict(v);
        }
        Ok(())
    })
}

/// Selected bandwidth, or NaN for a null handle.
///
/// # Safety
/// `smoother` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cg_smoother_bandwidth(smoother: *const CgSmoother) -> f64 {
    smoother.as_ref().map_or(f64::NAN, |s| s.0.bandwidth)
}

/// # Safety
/// `smoother` must be null or a handle from [`cg_smoother_fit`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cg_smoother_free(smoother: *mut CgSmoother) {
    if !smoother.is_null() {
        drop(Box::from_raw(smoother));
    }
}

/// Chain SEM X1 -> X2 -> ... with edge weights `betas[0..p-1]` and the same
/// noise law at every node.
///
/// # Safety
/// `betas` must point to `p - 1` readable doubles (may be null when p = 1);
/// `out` must be null or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn cg_sem_chain(
    betas: *const f64,
    p: usize,
    noise_kind: u32,
    noise_param: f64,
    out: *mut *mut CgSem,
) -> CgStatus {
    guard(|| {
        if p == 0 {
            return Err(invalid("p must be positive"));
        }
        let betas = if p == 1 { &[][..] } else { slice(betas, p - 1, "betas")? };
        let sem = LinearSem::chain(betas, vec![noise(noise_kind, noise_param)?; p]).map_err(lib_err)?;
        write(out, Box::into_raw(Box::new(CgSem(sem))))
    })
}

/// Population best-linear score total for the 0-based ordering `perm`.
///
/// # Safety
/// `sem` must be a live handle; `perm` must point to `len` readable values;
/// `out` must be null or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn cg_sem_permutation_total(
    sem: *const CgSem,
    perm: *const usize,
    len: usize,
    out: *mut f64,
) -> CgStatus {
    guard(|| {
        let sem = sem.as_ref().ok_or_else(|| invalid("sem is null"))?;
        if perm.is_null() {
            return Err(invalid("perm is null"));
        }
        let order = std::slice::from_raw_parts(perm, len).to_vec();
        let perm = Permutation::new(order).map_err(lib_err)?;
        let s = permutation_score_population(&sem.0, &perm).map_err(lib_err)?;
        write(out, s.total)
    })
}

/// Score total of the generating order.
///
/// # Safety
/// `sem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cg_sem_true_total(sem: *const CgSem) -> f64 {
    sem.as_ref().map_or(f64::NAN, |s| true_total(&s.0))
}

/// # Safety
/// `sem` must be null or a handle from [`cg_sem_chain`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cg_sem_free(sem: *mut CgSem) {
    if !sem.is_null() {
        drop(Box::from_raw(sem));
    }
}
