//! C ABI over the movseq library.
//!
//! Every fallible function returns a [`MovseqStatus`]; on failure the message
//! is available from [`movseq_last_error`] on the same thread until the next
//! call. Handles are opaque and must be released with their `_free` function.
//! Missing feature values are reported as NaN.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use movseq::featurize::{column_names, featurize_slices, FeatureMatrix, FeaturizeConfig, N_FEATURES};
use movseq::gp::{gp_loglike, gp_loglike_grad, ShoModel};
use movseq::pipeline::load_sessions;
use movseq::signal::{slice_session, Condition, SessionRecording};
use movseq::spectral::{detect_peaks, fft_features, find_fundamental, meng_vector, periodogram_of, MAX_PEAKS};
use movseq::stats::wilcoxon_paired;
use movseq::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MovseqStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Unreadable or malformed session data.
    InvalidInput = 3,
    /// Numerical failure: factorization, no fundamental, degenerate chain.
    Numerical = 4,
    /// Too few samples, rows or pairs for the requested computation.
    InsufficientData = 5,
    Io = 6,
    /// A Rust panic was caught at the boundary.
    Internal = 7,
}

/// Spectral features of one uniformly sampled series.
pub const MOVSEQ_SPECTRAL_FEATURES: usize = 18;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> MovseqStatus {
    match e {
        Error::MalformedRow { .. }
        | Error::NonMonotonicTimestamps { .. }
        | Error::MissingRequiredChannel(_)
        | Error::RateOutOfRange { .. }
        | Error::SchemaMismatch(_)
        | Error::Csv(_)
        | Error::Json(_) => MovseqStatus::InvalidInput,
        Error::NoFundamental
        | Error::FactorizationFailure(_)
        | Error::NoPeaks
        | Error::DegenerateChain(_)
        | Error::DegenerateCovariance
        | Error::NonFiniteLoss(_) => MovseqStatus::Numerical,
        Error::EmptySession
        | Error::TooFewSamples { .. }
        | Error::SliceTooShort(_)
        | Error::TooFewRows { .. }
        | Error::Untestable
        | Error::MissingCondition(_)
        | Error::EmptyTestSet => MovseqStatus::InsufficientData,
        Error::Io(_) => MovseqStatus::Io,
        Error::InvalidGpInput(_) | Error::LengthMismatch { .. } | Error::Config { .. } => MovseqStatus::InvalidArgument,
    }
}

/// Runs `f` with panics and errors converted to a status plus last-error text.
fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> MovseqStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MovseqStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            MovseqStatus::Internal
        }
    }
}

struct Failure(MovseqStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), format!("{}: {e}", e.kind()))
    }
}

fn null(what: &str) -> Failure {
    Failure(MovseqStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(MovseqStatus::InvalidArgument, msg.into())
}

/// # Safety
/// `p` must be null or point to `n` readable doubles.
unsafe fn slice_arg<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next movseq call on the same thread.
#[no_mangle]
pub extern "C" fn movseq_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn movseq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Features per slice (132).
#[no_mangle]
pub extern "C" fn movseq_feature_count() -> usize {
    N_FEATURES
}

/// Name of feature column `index` (`AccelX.M0` ...), static storage; null when
/// out of range.
#[no_mangle]
pub extern "C" fn movseq_feature_name(index: usize) -> *const c_char {
    static NAMES: std::sync::OnceLock<Vec<CString>> = std::sync::OnceLock::new();
    let names = NAMES.get_or_init(|| {
        column_names()
            .into_iter()
            .map(|n| CString::new(n).expect("ascii"))
            .collect()
    });
    names.get(index).map_or(ptr::null(), |n| n.as_ptr())
}

/// Sum of SHO terms plus white jitter.
pub struct MovseqGpModel(ShoModel);

/// Builds a model from log-parameters laid out as
/// `[log S0, log Q, log w0] * n_components, log jitter`.
///
/// # Safety
/// `log_params` must point to `n_params` doubles and `out` to a writable handle.
#[no_mangle]
pub unsafe extern "C" fn movseq_gp_model_new(
    log_params: *const f64,
    n_params: usize,
    out: *mut *mut MovseqGpModel,
) -> MovseqStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = slice_arg(log_params, n_params, "log_params")?;
        if p.len() < 4 || p.len() % 3 != 1 {
            return Err(invalid(format!("expected 3J + 1 parameters, got {}", p.len())));
        }
        let model = ShoModel::from_params(p);
        model.validate()?;
        *out = Box::into_raw(Box::new(MovseqGpModel(model)));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from [`movseq_gp_model_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn movseq_gp_model_free(model: *mut MovseqGpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Gaussian log-likelihood of `values` observed at strictly increasing `times`.
///
/// # Safety
/// `times` and `values` must point to `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn movseq_gp_loglike(
    model: *const MovseqGpModel,
    times: *const f64,
    values: *const f64,
    n: usize,
    out: *mut f64,
) -> MovseqStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let t = slice_arg(times, n, "times")?;
        let y = slice_arg(values, n, "values")?;
        *out = gp_loglike(&m.0, t, y)?;
        Ok(())
    })
}

/// Log-likelihood and its gradient with respect to the log-parameters.
/// `grad` must hold `grad_len == 3J + 1` doubles.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn movseq_gp_loglike_grad(
    model: *const MovseqGpModel,
    times: *const f64,
    values: *const f64,
    n: usize,
    out_loglike: *mut f64,
    grad: *mut f64,
    grad_len: usize,
) -> MovseqStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out_loglike.is_null() || grad.is_null() {
            return Err(null("output"));
        }
        if grad_len != m.0.n_params() {
            return Err(invalid(format!("grad_len {grad_len} != {}", m.0.n_params())));
        }
        let t = slice_arg(times, n, "times")?;
        let y = slice_arg(values, n, "values")?;
        let (ll, g) = gp_loglike_grad(&m.0, t, y)?;
        *out_loglike = ll;
        std::slice::from_raw_parts_mut(grad, grad_len).copy_from_slice(&g);
        Ok(())
    })
}

/// Spectral features of a uniformly sampled series: M0..M5 then F1..F12
/// (18 values, NaN where absent).
///
/// # Safety
/// `values` must point to `n` doubles and `out` to 18 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn movseq_spectral_features(
    values: *const f64,
    n: usize,
    rate: f64,
    out: *mut f64,
) -> MovseqStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let v = slice_arg(values, n, "values")?;
        if !(rate > 0.0) {
            return Err(invalid("rate must be positive"));
        }
        let p = periodogram_of(v, rate)?;
        let f0 = find_fundamental(&p)?;
        let peaks = detect_peaks(&p, f0, MAX_PEAKS);
        let dst = std::slice::from_raw_parts_mut(out, MOVSEQ_SPECTRAL_FEATURES);
        let vals = meng_vector(&p, f0).0.into_iter().chain(fft_features(&peaks).0);
        for (d, v) in dst.iter_mut().zip(vals) {
            *d = v.unwrap_or(f64::NAN);
        }
        Ok(())
    })
}

/// Paired Wilcoxon signed-rank test. NaN entries drop their pair.
///
/// # Safety
/// `x` and `y` must point to `n` doubles; `out_w` and `out_p` must be writable.
#[no_mangle]
pub unsafe extern "C" fn movseq_wilcoxon_paired(
    x: *const f64,
    y: *const f64,
    n: usize,
    out_w: *mut f64,
    out_p: *mut f64,
) -> MovseqStatus {
    guard(|| {
        if out_w.is_null() || out_p.is_null() {
            return Err(null("output"));
        }
        let opt = |s: &[f64]| s.iter().map(|v| (!v.is_nan()).then_some(*v)).collect::<Vec<_>>();
        let x = opt(slice_arg(x, n, "x")?);
        let y = opt(slice_arg(y, n, "y")?);
        let r = wilcoxon_paired(&x, &y)?;
        *out_w = r.w;
        *out_p = r.p;
        Ok(())
    })
}

/// One ingested recording.
pub struct MovseqSession(SessionRecording);

/// Reads a session CSV. A `.json` sidecar next to the file selects the wide
/// format; otherwise the long format is expected.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable handle.
#[no_mangle]
pub unsafe extern "C" fn movseq_session_load(path: *const c_char, out: *mut *mut MovseqSession) -> MovseqStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let p = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| invalid("path is not UTF-8"))?;
        let mut sessions = load_sessions(&[PathBuf::from(p)])?;
        if sessions.len() != 1 {
            return Err(invalid(format!("{p} holds {} sessions, expected one", sessions.len())));
        }
        *out = Box::into_raw(Box::new(MovseqSession(sessions.remove(0).session)));
        Ok(())
    })
}

/// # Safety
/// `session` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn movseq_session_free(session: *mut MovseqSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Session duration in seconds; NaN for a null handle.
///
/// # Safety
/// `session` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn movseq_session_duration(session: *const MovseqSession) -> f64 {
    session.as_ref().map_or(f64::NAN, |s| s.0.duration())
}

/// 1 for condition B, 0 for NB, -1 for a null handle.
///
/// # Safety
/// `session` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn movseq_session_condition(session: *const MovseqSession) -> i32 {
    session.as_ref().map_or(-1, |s| (s.0.condition == Condition::B) as i32)
}

/// Featurization settings. Zeroed fields take the library defaults.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MovseqFeaturizeOptions {
    pub window_s: f64,
    /// Nonzero fits the oscillator model per slice and direction (slow).
    pub fit_gp: u8,
    pub hmc_steps: usize,
    pub hmc_warmup: usize,
    /// Worker threads; 0 uses one.
    pub jobs: usize,
}

impl MovseqFeaturizeOptions {
    fn to_config(self) -> FeaturizeConfig {
        let mut c = FeaturizeConfig::default();
        if self.window_s > 0.0 {
            c.window_s = self.window_s;
        }
        c.fit_gp = self.fit_gp != 0;
        if self.hmc_steps > 0 {
            c.hmc.steps = self.hmc_steps;
        }
        if self.hmc_warmup > 0 {
            c.hmc.warmup = self.hmc_warmup;
        }
        c
    }
}

/// Slices × 132 feature values.
pub struct MovseqFeatureMatrix(FeatureMatrix);

/// Slices and featurizes a session.
///
/// # Safety
/// `session` must be a live handle, `options` null or valid, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn movseq_featurize(
    session: *const MovseqSession,
    options: *const MovseqFeaturizeOptions,
    seed: u64,
    out: *mut *mut MovseqFeatureMatrix,
) -> MovseqStatus {
    guard(|| {
        let s = session.as_ref().ok_or_else(|| null("session"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let opts = options.as_ref().copied().unwrap_or_default();
        let cfg = opts.to_config();
        if cfg.hmc.warmup >= cfg.hmc.steps {
            return Err(invalid("hmc_warmup must be below hmc_steps"));
        }
        let slices = slice_session(&s.0, cfg.window_s)?;
        let (rows, _) = featurize_slices(&slices, &cfg, seed, opts.jobs.max(1))?;
        *out = Box::into_raw(Box::new(MovseqFeatureMatrix(FeatureMatrix {
            rows,
            provenance: Vec::new(),
        })));
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn movseq_feature_matrix_free(m: *mut MovseqFeatureMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Number of rows (slices); 0 for a null handle.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn movseq_feature_matrix_rows(m: *const MovseqFeatureMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.n_rows())
}

/// Copies row `row` into `out` (132 doubles, NaN for NA).
///
/// # Safety
/// `m` must be a live handle and `out` must hold `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn movseq_feature_matrix_row(
    m: *const MovseqFeatureMatrix,
    row: usize,
    out: *mut f64,
    out_len: usize,
) -> MovseqStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("matrix"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let r =
            m.0.rows
                .get(row)
                .ok_or_else(|| invalid(format!("row {row} out of range ({})", m.0.n_rows())))?;
        if out_len < N_FEATURES {
            return Err(invalid(format!("out_len {out_len} < {N_FEATURES}")));
        }
        let dst = std::slice::from_raw_parts_mut(out, N_FEATURES);
        for (d, v) in dst.iter_mut().zip(&r.values) {
            *d = v.unwrap_or(f64::NAN);
        }
        Ok(())
    })
}
