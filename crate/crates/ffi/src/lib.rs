//! C ABI over `curveflow`.
//!
//! Every function returns a [`CfStatus`]. On failure the message is kept per
//! thread and read with [`cf_last_error_message`]. Handles are opaque and must
//! be released with the matching `*_free` function; passing null to a `*_free`
//! function is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use curveflow::config::{Config, RawConfig};
use curveflow::curvature::{verify_structure_conditions, CurvatureFunctionSpec};
use curveflow::error::FlowError;
use curveflow::radial::cylinder_extinction_time;
use curveflow::scenario::build_initial_data;
use curveflow::solver::{initialize, run, RunResult};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string was not valid UTF-8, a length was wrong or an index out of range.
    InvalidArgument = 2,
    /// Rejected configuration or input data.
    Config = 3,
    /// Admissibility loss, stiffness or another numerical fault during a run.
    Numerical = 4,
    /// Curvature vector outside the speed function's cone.
    OutsideCone = 5,
    Io = 6,
    /// A Rust panic was caught at the boundary.
    Panic = 7,
}

/// Speed function `f`.
pub struct CfSpeed {
    spec: CurvatureFunctionSpec,
}

/// Parsed run configuration.
pub struct CfConfig {
    raw: RawConfig,
}

/// Finished grid run with its snapshots.
pub struct CfRun {
    result: RunResult,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &FlowError) -> CfStatus {
    match e {
        FlowError::OutsideCone { .. } => CfStatus::OutsideCone,
        FlowError::Io(_) => CfStatus::Io,
        FlowError::InvalidVector(_) | FlowError::IndexOutOfRange { .. } => CfStatus::InvalidArgument,
        e if e.is_numerical() => CfStatus::Numerical,
        _ => CfStatus::Config,
    }
}

struct Failure(CfStatus, String);

impl From<FlowError> for Failure {
    fn from(e: FlowError) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            CfStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("panic inside curveflow");
            CfStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(CfStatus::NullArgument, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(CfStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn cf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a speed name (`H1`, `Hk^1/k:k=2`, `quotient:k=2,l=1`, `Gauss`) for dimension `dim`.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cf_speed_parse(name: *const c_char, dim: usize, out: *mut *mut CfSpeed) -> CfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let spec = CurvatureFunctionSpec::parse(str_arg(name, "name")?, dim)?;
        *out = Box::into_raw(Box::new(CfSpeed { spec }));
        Ok(())
    })
}

/// # Safety
/// `speed` must come from [`cf_speed_parse`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cf_speed_free(speed: *mut CfSpeed) {
    if !speed.is_null() {
        drop(Box::from_raw(speed));
    }
}

/// Dimension of the speed's curvature vectors.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cf_speed_dim(speed: *const CfSpeed, out: *mut usize) -> CfStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(speed, "speed")?.spec.dim;
        Ok(())
    })
}

/// `f(λ)` for `λ` of length `len`.
///
/// # Safety
/// `lambda` must point to `len` doubles; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cf_speed_eval(speed: *const CfSpeed, lambda: *const f64, len: usize, out: *mut f64) -> CfStatus {
    guard(|| {
        let spec = &ref_arg(speed, "speed")?.spec;
        let lambda = slice_arg(lambda, len, "lambda")?;
        let out = out_arg(out, "out")?;
        *out = spec.eval(lambda)?;
        Ok(())
    })
}

/// `f(λ)` and its gradient `∂f/∂λ_i` written to `grad` (length `len`).
///
/// # Safety
/// `lambda` and `grad` must point to `len` doubles; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cf_speed_eval_grad(
    speed: *const CfSpeed,
    lambda: *const f64,
    len: usize,
    out_f: *mut f64,
    grad: *mut f64,
) -> CfStatus {
    guard(|| {
        let spec = &ref_arg(speed, "speed")?.spec;
        let lambda = slice_arg(lambda, len, "lambda")?;
        let out_f = out_arg(out_f, "out_f")?;
        if grad.is_null() {
            return Err(null("grad"));
        }
        let grad = std::slice::from_raw_parts_mut(grad, len);
        *out_f = spec.eval_with_grad(lambda, grad)?;
        Ok(())
    })
}

/// Writes 1 to `out` when `λ` lies in the speed's cone, else 0.
///
/// # Safety
/// `lambda` must point to `len` doubles; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cf_speed_contains(speed: *const CfSpeed, lambda: *const f64, len: usize, out: *mut i32) -> CfStatus {
    guard(|| {
        let spec = &ref_arg(speed, "speed")?.spec;
        let lambda = slice_arg(lambda, len, "lambda")?;
        if len != spec.dim {
            return Err(Failure(CfStatus::InvalidArgument, format!("lambda has length {len}, expected {}", spec.dim)));
        }
        *out_arg(out, "out")? = spec.contains(lambda) as i32;
        Ok(())
    })
}

/// Samples the structure conditions; writes 1 to `passed` when all hold.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cf_speed_check_properties(speed: *const CfSpeed, samples: usize, seed: u64, passed: *mut i32) -> CfStatus {
    guard(|| {
        let spec = &ref_arg(speed, "speed")?.spec;
        let passed = out_arg(passed, "passed")?;
        *passed = verify_structure_conditions(spec, samples, seed).passed() as i32;
        Ok(())
    })
}

/// Extinction time `ρ0² / (2 f(1,…,1,0))` of the cylinder over a sphere of radius `rho0`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cf_cylinder_extinction_time(speed: *const CfSpeed, rho0: f64, out: *mut f64) -> CfStatus {
    guard(|| {
        let spec = &ref_arg(speed, "speed")?.spec;
        *out_arg(out, "out")? = cylinder_extinction_time(rho0, spec)?;
        Ok(())
    })
}

/// Parses flat `key = value` config text (`#` comments). Null text gives the defaults.
///
/// # Safety
/// `text` must be null or NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cf_config_from_text(text: *const c_char, out: *mut *mut CfConfig) -> CfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let raw = if text.is_null() { RawConfig::default() } else { RawConfig::from_text(str_arg(text, "text")?)? };
        Config::from_raw(raw.clone())?;
        *out = Box::into_raw(Box::new(CfConfig { raw }));
        Ok(())
    })
}

/// Applies one `key=value` override. The config is left unchanged on failure.
///
/// # Safety
/// `cfg` must come from [`cf_config_from_text`]; `pair` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cf_config_set(cfg: *mut CfConfig, pair: *const c_char) -> CfStatus {
    guard(|| {
        let cfg = out_arg(cfg, "cfg")?;
        let mut raw = cfg.raw.clone();
        raw.set(str_arg(pair, "pair")?)?;
        Config::from_raw(raw.clone())?;
        cfg.raw = raw;
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from [`cf_config_from_text`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cf_config_free(cfg: *mut CfConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Builds the configured scenario and runs it at the configured ceiling.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cf_run(cfg: *const CfConfig, out: *mut *mut CfRun) -> CfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let cfg = Config::from_raw(ref_arg(cfg, "cfg")?.raw.clone())?;
        cfg.require_compatible()?;
        let u0 = build_initial_data(&cfg.scenario, &cfg.grid()?)?;
        let state = initialize(&u0, cfg.ceiling, &cfg.stepper, &cfg.speed)?;
        let result = run(state, &cfg.speed, &cfg.stepper, &mut [])?;
        *out = Box::into_raw(Box::new(CfRun { result }));
        Ok(())
    })
}

/// # Safety
/// `run` must come from [`cf_run`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cf_run_free(run: *mut CfRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Number of grid nodes per snapshot.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cf_run_node_count(run: *const CfRun, out: *mut usize) -> CfStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(run, "run")?.result.grid.len();
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cf_run_snapshot_count(run: *const CfRun, out: *mut usize) -> CfStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(run, "run")?.result.snapshots.len();
        Ok(())
    })
}

/// Time of snapshot `k`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cf_run_snapshot_time(run: *const CfRun, k: usize, out: *mut f64) -> CfStatus {
    guard(|| {
        let r = &ref_arg(run, "run")?.result;
        let s = r.snapshots.get(k).ok_or_else(|| {
            Failure(CfStatus::InvalidArgument, format!("snapshot {k} out of range ({} snapshots)", r.snapshots.len()))
        })?;
        *out_arg(out, "out")? = s.t;
        Ok(())
    })
}

/// Copies the nodal values of snapshot `k` into `buf`, which must hold exactly
/// [`cf_run_node_count`] doubles (`len`). Nodes are ordered with the first axis fastest.
///
/// # Safety
/// `buf` must point to `len` writable doubles; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cf_run_snapshot_values(run: *const CfRun, k: usize, buf: *mut f64, len: usize) -> CfStatus {
    guard(|| {
        let r = &ref_arg(run, "run")?.result;
        let s = r.snapshots.get(k).ok_or_else(|| {
            Failure(CfStatus::InvalidArgument, format!("snapshot {k} out of range ({} snapshots)", r.snapshots.len()))
        })?;
        if len != s.u.len() {
            return Err(Failure(CfStatus::InvalidArgument, format!("buffer holds {len} values, snapshot has {}", s.u.len())));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        std::slice::from_raw_parts_mut(buf, len).copy_from_slice(&s.u);
        Ok(())
    })
}

/// Writes the escape time and 1 to `escaped` when the run escaped, else 0 and NaN.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cf_run_escape_time(run: *const CfRun, escaped: *mut i32, t: *mut f64) -> CfStatus {
    guard(|| {
        let r = &ref_arg(run, "run")?.result;
        let escaped = out_arg(escaped, "escaped")?;
        let t = out_arg(t, "t")?;
        *escaped = r.escape_time.is_some() as i32;
        *t = r.escape_time.unwrap_or(f64::NAN);
        Ok(())
    })
}
