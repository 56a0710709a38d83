//! C ABI for the invopt pipeline: opaque handles, integer status codes, and
//! a thread-local last-error message.
//!
//! Conventions:
//! - constructors return null on failure; query the message with
//!   [`invopt_last_error`];
//! - functions returning `int` use 0 for success and negative codes for
//!   failure;
//! - every handle has exactly one matching `_free` function.

use invopt::datagen::{self, Dataset, Family};
use invopt::sampler::{self, Algorithm, ChainConfig, McmcRun, Priors};
use invopt::uncertainty::{self, CredibleRegion};
use libc::{c_char, c_int, size_t};
use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::path::PathBuf;

/// Success.
pub const INVOPT_OK: c_int = 0;
/// Null pointer or otherwise invalid argument.
pub const INVOPT_EINVAL: c_int = -1;
/// Operation failed; see `invopt_last_error`.
pub const INVOPT_EFAIL: c_int = -2;
/// Output buffer too small.
pub const INVOPT_ENOSPACE: c_int = -3;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let c = CString::new(msg.into()).unwrap_or_else(|_| CString::new("invalid error").unwrap());
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Opaque dataset handle.
pub struct InvoptDataset {
    inner: Dataset,
}

/// Opaque multi-chain sampler output.
pub struct InvoptRun {
    inner: McmcRun,
}

/// Opaque credible region handle.
pub struct InvoptRegion {
    inner: CredibleRegion,
}

/// Multi-chain configuration mirror of the library defaults.
#[repr(C)]
#[derive(Clone, Copy)]
pub struct InvoptChainConfig {
    pub n_chains: size_t,
    pub block_size: size_t,
    pub max_iters: size_t,
    pub warmup_fraction: f64,
    pub psrf_threshold: f64,
    pub target_accept_lo: f64,
    pub target_accept_hi: f64,
    pub seed: u64,
}

impl From<InvoptChainConfig> for ChainConfig {
    fn from(c: InvoptChainConfig) -> ChainConfig {
        ChainConfig {
            n_chains: c.n_chains,
            block_size: c.block_size,
            max_iters: c.max_iters,
            warmup_fraction: c.warmup_fraction,
            psrf_threshold: c.psrf_threshold,
            target_accept: (c.target_accept_lo, c.target_accept_hi),
            seed: c.seed,
        }
    }
}

/// Copies the last error message into `buf` (NUL-terminated, truncated to
/// `cap`). Returns the full message length in bytes, or 0 when no error is
/// recorded.
///
/// # Safety
/// `buf` must point to `cap` writable bytes, or be null (length query).
#[no_mangle]
pub unsafe extern "C" fn invopt_last_error(buf: *mut c_char, cap: size_t) -> size_t {
    LAST_ERROR.with(|e| {
        let guard = e.borrow();
        let Some(msg) = guard.as_ref() else {
            return 0;
        };
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap);
            std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            // ensure termination even when truncated
            *buf.add(n - 1) = 0;
        }
        bytes.len() - 1
    })
}

unsafe fn path_from(ptr: *const c_char) -> Option<PathBuf> {
    if ptr.is_null() {
        set_error("null path");
        return None;
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Some(PathBuf::from(s)),
        Err(_) => {
            set_error("path is not valid UTF-8");
            None
        }
    }
}

fn family_from(code: c_int) -> Option<Family> {
    match code {
        0 => Some(Family::Lp),
        1 => Some(Family::Qp),
        _ => {
            set_error(format!("unknown family code {code} (0 = LP, 1 = QP)"));
            None
        }
    }
}

fn algorithm_from(code: c_int) -> Option<Algorithm> {
    match Algorithm::from_index(code as u8) {
        Ok(a) => Some(a),
        Err(e) => {
            set_error(e.to_string());
            None
        }
    }
}

/// Library default chain configuration with the given seed.
#[no_mangle]
pub extern "C" fn invopt_chain_config_default(seed: u64) -> InvoptChainConfig {
    let d = ChainConfig::default();
    InvoptChainConfig {
        n_chains: d.n_chains,
        block_size: d.block_size,
        max_iters: d.max_iters,
        warmup_fraction: d.warmup_fraction,
        psrf_threshold: d.psrf_threshold,
        target_accept_lo: d.target_accept.0,
        target_accept_hi: d.target_accept.1,
        seed,
    }
}

/// Generates a dataset. `family`: 0 = LP, 1 = QP. `error_model`: 1 =
/// decision-space (noise_param is sigma^2), 2 = objective-space
/// (noise_param is kappa). Returns null on failure.
#[no_mangle]
pub extern "C" fn invopt_dataset_generate(
    family: c_int,
    error_model: c_int,
    n: size_t,
    m: size_t,
    count: size_t,
    noise_param: f64,
    seed: u64,
) -> *mut InvoptDataset {
    clear_error();
    let Some(family) = family_from(family) else {
        return std::ptr::null_mut();
    };
    let built = match error_model {
        1 => datagen::generate_decision_dataset(family, n, m, count, noise_param, None, seed),
        2 => datagen::generate_objective_dataset(family, n, m, count, noise_param, None, seed),
        other => {
            set_error(format!(
                "unknown error model {other} (1 = decision, 2 = objective)"
            ));
            return std::ptr::null_mut();
        }
    };
    match built {
        Ok(inner) => Box::into_raw(Box::new(InvoptDataset { inner })),
        Err(e) => {
            set_error(e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Loads a dataset JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn invopt_dataset_load(path: *const c_char) -> *mut InvoptDataset {
    clear_error();
    let Some(path) = path_from(path) else {
        return std::ptr::null_mut();
    };
    match Dataset::load(&path) {
        Ok(inner) => Box::into_raw(Box::new(InvoptDataset { inner })),
        Err(e) => {
            set_error(e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Saves a dataset as JSON.
///
/// # Safety
/// `ds` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn invopt_dataset_save(
    ds: *const InvoptDataset,
    path: *const c_char,
) -> c_int {
    clear_error();
    if ds.is_null() {
        set_error("null dataset");
        return INVOPT_EINVAL;
    }
    let Some(path) = path_from(path) else {
        return INVOPT_EINVAL;
    };
    match (*ds).inner.save(&path) {
        Ok(()) => INVOPT_OK,
        Err(e) => {
            set_error(e.to_string());
            INVOPT_EFAIL
        }
    }
}

/// Number of observations.
///
/// # Safety
/// `ds` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn invopt_dataset_len(ds: *const InvoptDataset) -> size_t {
    if ds.is_null() {
        return 0;
    }
    (*ds).inner.len()
}

/// Decision dimension.
///
/// # Safety
/// `ds` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn invopt_dataset_dim(ds: *const InvoptDataset) -> size_t {
    if ds.is_null() {
        return 0;
    }
    (*ds).inner.dim()
}

/// # Safety
/// `ds` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn invopt_dataset_free(ds: *mut InvoptDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Runs the sampler matching `algorithm` (1 = decision-space, 2 =
/// objective-space) with default priors. Returns null on failure.
///
/// # Safety
/// `ds` and `cfg` must be live pointers.
#[no_mangle]
pub unsafe extern "C" fn invopt_run_chains(
    ds: *const InvoptDataset,
    algorithm: c_int,
    cfg: *const InvoptChainConfig,
) -> *mut InvoptRun {
    clear_error();
    if ds.is_null() || cfg.is_null() {
        set_error("null argument");
        return std::ptr::null_mut();
    }
    let Some(algorithm) = algorithm_from(algorithm) else {
        return std::ptr::null_mut();
    };
    let chain_cfg = ChainConfig::from(*cfg);
    let priors = Priors::default();
    let run = match algorithm {
        Algorithm::Decision => sampler::run_chain_decision(&(*ds).inner, &chain_cfg, &priors),
        Algorithm::Objective => sampler::run_chain_objective(&(*ds).inner, &chain_cfg, &priors),
    };
    match run {
        Ok(inner) => Box::into_raw(Box::new(InvoptRun { inner })),
        Err(e) => {
            set_error(e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Final maximum PSRF of the run.
///
/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn invopt_run_psrf(run: *const InvoptRun) -> f64 {
    if run.is_null() {
        return f64::NAN;
    }
    (*run).inner.psrf_final
}

/// 1 when the PSRF threshold was met, 0 otherwise.
///
/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn invopt_run_converged(run: *const InvoptRun) -> c_int {
    if run.is_null() {
        return 0;
    }
    (*run).inner.converged as c_int
}

/// Iterations executed per chain.
///
/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn invopt_run_total_iters(run: *const InvoptRun) -> size_t {
    if run.is_null() {
        return 0;
    }
    (*run).inner.total_iters
}

/// Number of pooled post-warm-up samples.
///
/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn invopt_run_sample_count(run: *const InvoptRun) -> size_t {
    if run.is_null() {
        return 0;
    }
    (*run).inner.traces.iter().map(|t| t.len()).sum()
}

/// Sample dimension.
///
/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn invopt_run_dim(run: *const InvoptRun) -> size_t {
    if run.is_null() {
        return 0;
    }
    (*run)
        .inner
        .traces
        .first()
        .and_then(|t| t.theta_samples.first())
        .map_or(0, |s| s.dim())
}

/// Copies pooled samples row-major into `out` (`sample_count * dim`
/// doubles).
///
/// # Safety
/// `run` must be live; `out` must point to `cap` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn invopt_run_copy_samples(
    run: *const InvoptRun,
    out: *mut f64,
    cap: size_t,
) -> c_int {
    clear_error();
    if run.is_null() || out.is_null() {
        set_error("null argument");
        return INVOPT_EINVAL;
    }
    let total: usize = invopt_run_sample_count(run) * invopt_run_dim(run);
    if cap < total {
        set_error(format!("buffer holds {cap} doubles, need {total}"));
        return INVOPT_ENOSPACE;
    }
    let mut offset = 0;
    for trace in &(*run).inner.traces {
        for s in &trace.theta_samples {
            std::ptr::copy_nonoverlapping(s.coords().as_ptr(), out.add(offset), s.dim());
            offset += s.dim();
        }
    }
    INVOPT_OK
}

/// Root mean squared angular deviation of the pooled samples, radians.
/// Returns NaN on failure.
///
/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn invopt_run_alpha_rms(run: *const InvoptRun) -> f64 {
    clear_error();
    if run.is_null() {
        set_error("null run");
        return f64::NAN;
    }
    match uncertainty::alpha_rms(&(*run).inner.pooled_theta()) {
        Ok(v) => v,
        Err(e) => {
            set_error(e.to_string());
            f64::NAN
        }
    }
}

/// # Safety
/// `run` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn invopt_run_free(run: *mut InvoptRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Fits the `(1 - alpha)` credible region from a run's pooled samples.
/// Pass `epsilon <= 0` for the scale-relative default regularizer.
///
/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn invopt_region_fit(
    run: *const InvoptRun,
    alpha: f64,
    epsilon: f64,
) -> *mut InvoptRegion {
    clear_error();
    if run.is_null() {
        set_error("null run");
        return std::ptr::null_mut();
    }
    let eps = if epsilon > 0.0 { Some(epsilon) } else { None };
    match uncertainty::fit_region(&(*run).inner.pooled_theta(), alpha, eps) {
        Ok(inner) => Box::into_raw(Box::new(InvoptRegion { inner })),
        Err(e) => {
            set_error(e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Loads a region JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn invopt_region_load(path: *const c_char) -> *mut InvoptRegion {
    clear_error();
    let Some(path) = path_from(path) else {
        return std::ptr::null_mut();
    };
    match CredibleRegion::load(&path) {
        Ok(inner) => Box::into_raw(Box::new(InvoptRegion { inner })),
        Err(e) => {
            set_error(e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Saves a region as JSON.
///
/// # Safety
/// `region` must be live; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn invopt_region_save(
    region: *const InvoptRegion,
    path: *const c_char,
) -> c_int {
    clear_error();
    if region.is_null() {
        set_error("null region");
        return INVOPT_EINVAL;
    }
    let Some(path) = path_from(path) else {
        return INVOPT_EINVAL;
    };
    match (*region).inner.save(&path) {
        Ok(()) => INVOPT_OK,
        Err(e) => {
            set_error(e.to_string());
            INVOPT_EFAIL
        }
    }
}

/// Region dimension.
///
/// # Safety
/// `region` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn invopt_region_dim(region: *const InvoptRegion) -> size_t {
    if region.is_null() {
        return 0;
    }
    (*region).inner.dim()
}

/// Membership test: 1 inside, 0 outside, negative on error. `theta` is
/// normalized before testing.
///
/// # Safety
/// `region` must be live; `theta` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn invopt_region_contains(
    region: *const InvoptRegion,
    theta: *const f64,
    len: size_t,
) -> c_int {
    clear_error();
    if region.is_null() || theta.is_null() {
        set_error("null argument");
        return INVOPT_EINVAL;
    }
    if len != (*region).inner.dim() {
        set_error(format!(
            "direction has dimension {len}, region has {}",
            (*region).inner.dim()
        ));
        return INVOPT_EINVAL;
    }
    let coords = std::slice::from_raw_parts(theta, len);
    match invopt::geometry::normalize(coords) {
        Ok(u) => uncertainty::region_contains(&(*region).inner, &u) as c_int,
        Err(e) => {
            set_error(e.to_string());
            INVOPT_EINVAL
        }
    }
}

/// # Safety
/// `region` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn invopt_region_free(region: *mut InvoptRegion) {
    if !region.is_null() {
        drop(Box::from_raw(region));
    }
}
