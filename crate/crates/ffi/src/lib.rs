//! C ABI over `w2lab`.
//!
//! Every fallible function returns a [`W2Status`]; on failure the message is
//! available from [`w2_last_error`] on the same thread. Handles are opaque and
//! released with their `*_free` function. Strings returned through `char **`
//! outputs are released with [`w2_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use w2lab::bounds::{self, BoundId, BoundInputs};
use w2lab::gaussian_exact::exact_sampler_w2;
use w2lab::sampler::{ddpm_run, SamplerConfig, ScoreModel};
use w2lab::schedules::{audit_schedule, VarianceSchedule};
use w2lab::targets::{GaussianMixture, SphericalGaussian, Target};
use w2lab::Error;

/// Status codes. The nonzero library codes match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum W2Status {
    Ok = 0,
    /// Invalid input: out-of-range parameter, malformed JSON, wrong dimension.
    Validation = 2,
    /// A bound's hypothesis does not hold for the given inputs.
    Hypothesis = 3,
    /// Non-finite intermediate or quadrature failure.
    Numerical = 4,
    NullPointer = 10,
    InvalidUtf8 = 11,
    BufferTooSmall = 12,
    Panic = 13,
}

/// A variance schedule and its time grid.
pub struct W2Schedule(VarianceSchedule);

/// A target distribution with closed-form smoothed scores.
pub struct W2Target(Target);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> W2Status {
    match e.exit_code() {
        3 => W2Status::Hypothesis,
        4 => W2Status::Numerical,
        _ => W2Status::Validation,
    }
}

struct Fail(W2Status, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(W2Status::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status and the last-error message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> W2Status {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => W2Status::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            W2Status::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Fail(W2Status::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Fail> {
    let c = CString::new(s).map_err(|e| Fail(W2Status::Validation, e.to_string()))?;
    write_out(out, c.into_raw(), "out")
}

unsafe fn schedule_out(out: *mut *mut W2Schedule, s: Result<VarianceSchedule, Error>) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    let boxed = Box::into_raw(Box::new(W2Schedule(s?)));
    out.write(boxed);
    Ok(())
}

unsafe fn target_out(out: *mut *mut W2Target, t: Result<Target, Error>) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    let boxed = Box::into_raw(Box::new(W2Target(t?)));
    out.write(boxed);
    Ok(())
}

unsafe fn schedule_ref<'a>(s: *const W2Schedule) -> Result<&'a VarianceSchedule, Fail> {
    s.as_ref().map(|s| &s.0).ok_or_else(|| null("schedule"))
}

unsafe fn target_ref<'a>(t: *const W2Target) -> Result<&'a Target, Fail> {
    t.as_ref().map(|t| &t.0).ok_or_else(|| null("target"))
}

/// Message of the most recent failure on this thread, or null. Valid until
/// the next failing call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn w2_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version (static string; do not free).
#[no_mangle]
pub extern "C" fn w2_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version string"),
    };
    VERSION.as_ptr()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn w2_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// `t_i = (i + 1) / (N + 1)`, `beta_i = 1 / (i + 2)`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn w2_schedule_harmonic(n: usize, out: *mut *mut W2Schedule) -> W2Status {
    guard(|| schedule_out(out, VarianceSchedule::harmonic(n)))
}

/// Every `beta_i = beta0`, `t_N = 1 - delta`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn w2_schedule_constant(n: usize, beta0: f64, delta: f64, out: *mut *mut W2Schedule) -> W2Status {
    guard(|| schedule_out(out, VarianceSchedule::constant(n, beta0, delta)))
}

/// Geometric schedule with `beta_0 = N^(-c0)` and growth rate `c1 log N / N`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn w2_schedule_geometric(
    n: usize,
    c0: f64,
    c1: f64,
    delta: f64,
    out: *mut *mut W2Schedule,
) -> W2Status {
    guard(|| schedule_out(out, VarianceSchedule::geometric(n, c0, c1, delta)))
}

/// Cosine schedule `t_i = sin^2(i pi / (2 N (1 + s)))`. A NaN `t0` selects
/// the default `t_1 / 4`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn w2_schedule_cosine(n: usize, s: f64, t0: f64, out: *mut *mut W2Schedule) -> W2Status {
    let t0 = (!t0.is_nan()).then_some(t0);
    guard(|| schedule_out(out, VarianceSchedule::cosine(n, s, t0)))
}

/// Schedule from `len` variances and an early-stopping `delta`.
///
/// # Safety
/// `betas` must point to `len` doubles; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn w2_schedule_from_betas(
    betas: *const f64,
    len: usize,
    delta: f64,
    out: *mut *mut W2Schedule,
) -> W2Status {
    guard(|| {
        let b = slice_arg(betas, len, "betas")?;
        schedule_out(out, VarianceSchedule::from_betas(b, delta))
    })
}

/// Schedule from its JSON encoding; every invariant is re-checked.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn w2_schedule_from_json(json: *const c_char, out: *mut *mut W2Schedule) -> W2Status {
    guard(|| {
        let text = str_arg(json, "json")?;
        schedule_out(out, VarianceSchedule::from_json(text))
    })
}

/// JSON encoding of the schedule; free with `w2_string_free`.
///
/// # Safety
/// `schedule` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn w2_schedule_to_json(schedule: *const W2Schedule, out: *mut *mut c_char) -> W2Status {
    guard(|| {
        let s = schedule_ref(schedule)?;
        write_string(out, s.to_json()?)
    })
}

/// Condition report as JSON; free with `w2_string_free`.
///
/// # Safety
/// `schedule` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn w2_schedule_audit_json(schedule: *const W2Schedule, out: *mut *mut c_char) -> W2Status {
    guard(|| {
        let s = schedule_ref(schedule)?;
        let report = audit_schedule(s);
        let json = serde_json::to_string(&report).map_err(Error::from)?;
        write_string(out, json)
    })
}

/// Number of steps `N`, or 0 for a null handle.
///
/// # Safety
/// `schedule` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn w2_schedule_n_steps(schedule: *const W2Schedule) -> usize {
    schedule.as_ref().map_or(0, |s| s.0.n_steps())
}

/// Copies the `N + 1` grid times into `buf`.
///
/// # Safety
/// `schedule` must be a live handle; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn w2_schedule_times(schedule: *const W2Schedule, buf: *mut f64, len: usize) -> W2Status {
    guard(|| {
        let t = schedule_ref(schedule)?.times();
        copy_into(t, buf, len)
    })
}

/// Copies the `N` variances into `buf`.
///
/// # Safety
/// `schedule` must be a live handle; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn w2_schedule_betas(schedule: *const W2Schedule, buf: *mut f64, len: usize) -> W2Status {
    guard(|| {
        let b = schedule_ref(schedule)?.betas();
        copy_into(b, buf, len)
    })
}

unsafe fn copy_into(src: &[f64], buf: *mut f64, len: usize) -> Result<(), Fail> {
    if len < src.len() {
        return Err(Fail(
            W2Status::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", src.len()),
        ));
    }
    if buf.is_null() {
        return Err(null("buf"));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

/// Releases a schedule. Null is ignored.
///
/// # Safety
/// `schedule` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn w2_schedule_free(schedule: *mut W2Schedule) {
    if !schedule.is_null() {
        drop(Box::from_raw(schedule));
    }
}

/// `N(mean, variance I_d)`.
///
/// # Safety
/// `mean` must point to `d` doubles; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn w2_target_gaussian(
    mean: *const f64,
    d: usize,
    variance: f64,
    out: *mut *mut W2Target,
) -> W2Status {
    guard(|| {
        if d == 0 {
            return Err(Fail(W2Status::Validation, "d must be >= 1".into()));
        }
        let m = slice_arg(mean, d, "mean")?.to_vec();
        target_out(out, SphericalGaussian::new(m, variance).map(Target::Gaussian))
    })
}

/// Mixture of `k` spherical Gaussians; `means` is row-major `k x d`.
///
/// # Safety
/// `weights` and `variances` must point to `k` doubles, `means` to `k * d`;
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn w2_target_mixture(
    weights: *const f64,
    means: *const f64,
    variances: *const f64,
    k: usize,
    d: usize,
    out: *mut *mut W2Target,
) -> W2Status {
    guard(|| {
        if k == 0 || d == 0 {
            return Err(Fail(W2Status::Validation, "k and d must be >= 1".into()));
        }
        let w = slice_arg(weights, k, "weights")?.to_vec();
        let m = slice_arg(means, k * d, "means")?;
        let v = slice_arg(variances, k, "variances")?.to_vec();
        let rows = m.chunks(d).map(<[f64]>::to_vec).collect();
        target_out(out, GaussianMixture::new(w, rows, v).map(Target::Mixture))
    })
}

/// Dimension of the target, or 0 for a null handle.
///
/// # Safety
/// `target` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn w2_target_dim(target: *const W2Target) -> usize {
    target.as_ref().map_or(0, |t| t.0.dim())
}

/// Smoothed score `grad log pi_t(y)` written to `out` (`d` doubles).
///
/// # Safety
/// `target` must be a live handle; `y` and `out` must hold `d` doubles.
#[no_mangle]
pub unsafe extern "C" fn w2_target_score(
    target: *const W2Target,
    t: f64,
    y: *const f64,
    d: usize,
    out: *mut f64,
) -> W2Status {
    guard(|| {
        let tg = target_ref(target)?;
        if d != tg.dim() {
            return Err(Fail(
                W2Status::Validation,
                format!("y has dimension {d}, target has {}", tg.dim()),
            ));
        }
        let y = slice_arg(y, d, "y")?;
        let s = tg.score(t, y)?;
        copy_into(&s, out, d)
    })
}

/// Releases a target. Null is ignored.
///
/// # Safety
/// `target` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn w2_target_free(target: *mut W2Target) {
    if !target.is_null() {
        drop(Box::from_raw(target));
    }
}

unsafe fn score_model_arg(json: *const c_char) -> Result<ScoreModel, Fail> {
    if json.is_null() {
        return Ok(ScoreModel::Exact);
    }
    let text = str_arg(json, "score_model_json")?;
    Ok(serde_json::from_str(text).map_err(Error::from)?)
}

/// Exact W2 between the sampler output and a Gaussian target, and to the
/// target smoothed at `t_N`. A null `score_model_json` means the exact score.
///
/// # Safety
/// Handles must be live; `mu_hat` must hold `d` doubles; outputs must be
/// valid pointers.
#[no_mangle]
pub unsafe extern "C" fn w2_exact_w2(
    schedule: *const W2Schedule,
    target: *const W2Target,
    mu_hat: *const f64,
    d: usize,
    score_model_json: *const c_char,
    to_target: *mut f64,
    to_smoothed: *mut f64,
) -> W2Status {
    guard(|| {
        let s = schedule_ref(schedule)?;
        let g = match target_ref(target)? {
            Target::Gaussian(g) => g,
            Target::Mixture(_) => {
                return Err(Fail(W2Status::Validation, "exact W2 needs a Gaussian target".into()))
            }
        };
        let mu_hat = slice_arg(mu_hat, d, "mu_hat")?;
        if d != g.dim() {
            return Err(Fail(W2Status::Validation, format!("mu_hat has dimension {d}, target has {}", g.dim())));
        }
        let model = score_model_arg(score_model_json)?;
        let w = exact_sampler_w2(s, g, mu_hat, Some(&model))?;
        write_out(to_target, w.to_target, "to_target")?;
        write_out(to_smoothed, w.to_smoothed, "to_smoothed")
    })
}

/// Runs `n_chains` sampler chains and writes the `n_chains x d` terminal
/// points row-major into `buf`.
///
/// # Safety
/// Handles must be live; `mu_hat` must hold `d` doubles; `buf` must hold
/// `buf_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn w2_ddpm_run(
    schedule: *const W2Schedule,
    target: *const W2Target,
    mu_hat: *const f64,
    d: usize,
    n_chains: usize,
    seed: u64,
    score_model_json: *const c_char,
    buf: *mut f64,
    buf_len: usize,
) -> W2Status {
    guard(|| {
        let s = schedule_ref(schedule)?;
        let t = target_ref(target)?;
        let mu_hat = slice_arg(mu_hat, d, "mu_hat")?.to_vec();
        let config = SamplerConfig::new(mu_hat, n_chains, seed).with_score_model(score_model_arg(score_model_json)?);
        let needed = n_chains.checked_mul(d).unwrap_or(usize::MAX);
        if buf_len < needed {
            return Err(Fail(
                W2Status::BufferTooSmall,
                format!("buffer holds {buf_len} values, {needed} needed"),
            ));
        }
        let samples = ddpm_run(s, t, &config)?;
        copy_into(&samples.data, buf, buf_len)
    })
}

/// Evaluates the bound `bound_id` (e.g. `"two_sided_lipschitz"`) on inputs
/// given as JSON. Returns `W2_STATUS_HYPOTHESIS` when a hypothesis fails.
///
/// # Safety
/// Strings must be NUL-terminated; outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn w2_bound_evaluate(
    bound_id: *const c_char,
    params_json: *const c_char,
    value: *mut f64,
    constant_known: *mut bool,
) -> W2Status {
    guard(|| {
        let id: BoundId = str_arg(bound_id, "bound_id")?.parse()?;
        let inp: BoundInputs = serde_json::from_str(str_arg(params_json, "params_json")?).map_err(Error::from)?;
        inp.validate()?;
        let v = bounds::evaluate(id, &inp)?;
        write_out(value, v.value, "value")?;
        write_out(constant_known, v.constant_known, "constant_known")
    })
}
