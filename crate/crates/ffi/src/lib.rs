//! C ABI for mixed-whittle.
//!
//! Objects cross the boundary as opaque handles created by `mw_*_new` or
//! `mw_fit` and released with the matching `mw_*_free`. Every fallible call
//! returns an [`MwStatus`]; on failure `mw_last_error` describes the error
//! on the calling thread. Model and covariance specifications are passed as
//! JSON strings in the same format the command-line tool reads.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mixed_whittle::design::ExogenousSeries;
use mixed_whittle::estimate::{fit, ModelFit, ModelSpec};
use mixed_whittle::optim::OptimConfig;
use mixed_whittle::predict::predict;
use mixed_whittle::spectral::ObservedSeries;
use mixed_whittle::{CovarianceSpec, Error};

/// Result codes. Values are stable.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidString = 2,
    Domain = 3,
    Dimension = 4,
    Length = 5,
    NotPositiveDefinite = 6,
    Singular = 7,
    Numerical = 8,
    MetricNotApplicable = 9,
    Input = 10,
    Config = 11,
    Io = 12,
    Json = 13,
    Csv = 14,
    BufferTooSmall = 15,
    Panic = 99,
}

impl From<&Error> for MwStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Domain(_) => MwStatus::Domain,
            Error::Dimension(_) => MwStatus::Dimension,
            Error::Length(_) => MwStatus::Length,
            Error::NotPositiveDefinite { .. } => MwStatus::NotPositiveDefinite,
            Error::Singular { .. } => MwStatus::Singular,
            Error::Numerical(_) => MwStatus::Numerical,
            Error::MetricNotApplicable(_) => MwStatus::MetricNotApplicable,
            Error::Input(_) => MwStatus::Input,
            Error::Config(_) => MwStatus::Config,
            Error::Io(_) => MwStatus::Io,
            Error::Json(_) => MwStatus::Json,
            Error::Csv(_) => MwStatus::Csv,
        }
    }
}

/// Observed series with an optional exogenous driver.
pub struct MwSeries {
    series: ObservedSeries,
    exog: Option<ExogenousSeries>,
}

/// A fitted model.
pub struct MwFit {
    fit: ModelFit,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(MwStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(MwStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(MwStatus::NullPointer, format!("{what} is NULL"))
}

/// Runs `f`, recording any error or panic for `mw_last_error`.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MwStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            MwStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(MwStatus::InvalidString, format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, Failure> {
    serde_json::from_str(text).map_err(|e| Failure(MwStatus::Json, e.to_string()))
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mw_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a series from `n` values and a mask (nonzero = observed). The
/// mask may be NULL for a complete series.
///
/// # Safety
/// `values` must point to `n` doubles, `mask` (if not NULL) to `n` bytes,
/// and `out` to writable storage for a pointer.
#[no_mangle]
pub unsafe extern "C" fn mw_series_new(values: *const f64, mask: *const u8, n: usize, out: *mut *mut MwSeries) -> MwStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let v = slice_arg(values, n, "values")?.to_vec();
        let m: Vec<bool> = if mask.is_null() { vec![true; n] } else { slice_arg(mask, n, "mask")?.iter().map(|&g| g != 0).collect() };
        let series = ObservedSeries::new(v, m)?;
        *out = Box::into_raw(Box::new(MwSeries { series, exog: None }));
        Ok(())
    })
}

/// Attaches an exogenous driver whose first `lead` values precede the first
/// response time.
///
/// # Safety
/// `series` must be a live handle and `values` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mw_series_set_exog(series: *mut MwSeries, values: *const f64, len: usize, lead: usize) -> MwStatus {
    guard(|| {
        let s = series.as_mut().ok_or_else(|| null("series"))?;
        let v = slice_arg(values, len, "values")?.to_vec();
        s.exog = Some(ExogenousSeries::new(v, lead)?);
        Ok(())
    })
}

/// Number of time steps.
///
/// # Safety
/// `series` must be a live handle or NULL (which gives 0).
#[no_mangle]
pub unsafe extern "C" fn mw_series_len(series: *const MwSeries) -> usize {
    series.as_ref().map_or(0, |s| s.series.len())
}

/// # Safety
/// `series` must come from `mw_series_new` and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn mw_series_free(series: *mut MwSeries) {
    if !series.is_null() {
        drop(Box::from_raw(series));
    }
}

/// Fits the model described by `spec_json` (a model specification object).
/// `optim_json` may be NULL for the default optimiser settings.
///
/// # Safety
/// `series` must be a live handle, the strings NUL-terminated, and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn mw_fit(
    series: *const MwSeries,
    spec_json: *const c_char,
    optim_json: *const c_char,
    out: *mut *mut MwFit,
) -> MwStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let s = series.as_ref().ok_or_else(|| null("series"))?;
        let spec: ModelSpec = json(str_arg(spec_json, "spec_json")?)?;
        let optim: OptimConfig = if optim_json.is_null() { OptimConfig::default() } else { json(str_arg(optim_json, "optim_json")?)? };
        let f = fit(&s.series, s.exog.as_ref(), &spec, &optim)?;
        *out = Box::into_raw(Box::new(MwFit { fit: f }));
        Ok(())
    })
}

/// # Safety
/// `fit` must come from `mw_fit` and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn mw_fit_free(fit: *mut MwFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Attained objective and convergence flag (either output may be NULL).
///
/// # Safety
/// `fit` must be a live handle; non-NULL outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn mw_fit_objective(fit: *const MwFit, objective: *mut f64, converged: *mut bool) -> MwStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(|| null("fit"))?;
        if !objective.is_null() {
            *objective = f.fit.objective;
        }
        if !converged.is_null() {
            *converged = f.fit.converged();
        }
        Ok(())
    })
}

/// Copies the regression coefficients into `buf`. `len` receives the
/// number of coefficients; if `cap` is smaller, nothing is copied and
/// `MW_STATUS_BUFFER_TOO_SMALL` is returned.
///
/// # Safety
/// `fit` must be a live handle, `buf` must hold `cap` doubles and `len`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn mw_fit_beta(fit: *const MwFit, buf: *mut f64, cap: usize, len: *mut usize) -> MwStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(|| null("fit"))?;
        if len.is_null() {
            return Err(null("len"));
        }
        let beta = &f.fit.beta;
        *len = beta.len();
        if cap < beta.len() {
            return Err(Failure(MwStatus::BufferTooSmall, format!("{} coefficients, buffer holds {cap}", beta.len())));
        }
        if !beta.is_empty() {
            if buf.is_null() {
                return Err(null("buf"));
            }
            ptr::copy_nonoverlapping(beta.as_ptr(), buf, beta.len());
        }
        Ok(())
    })
}

/// The whole fit as a JSON string, released with `mw_string_free`.
///
/// # Safety
/// `fit` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mw_fit_to_json(fit: *const MwFit, out: *mut *mut c_char) -> MwStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(|| null("fit"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let text = serde_json::to_string(&f.fit).map_err(|e| Failure(MwStatus::Json, e.to_string()))?;
        *out = CString::new(text).map_err(|_| Failure(MwStatus::InvalidString, "interior NUL".into()))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn mw_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Kriging predictions at `k` 0-based target times (indices at or past the
/// series length are forecasts). Writes `k` means and variances.
///
/// # Safety
/// Handles must be live; `targets` must hold `k` values and `mean`,
/// `variance` room for `k` doubles.
#[no_mangle]
pub unsafe extern "C" fn mw_predict(
    fit: *const MwFit,
    series: *const MwSeries,
    targets: *const usize,
    k: usize,
    mean: *mut f64,
    variance: *mut f64,
) -> MwStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(|| null("fit"))?;
        let s = series.as_ref().ok_or_else(|| null("series"))?;
        let t = slice_arg(targets, k, "targets")?;
        if k == 0 {
            return Ok(());
        }
        if mean.is_null() || variance.is_null() {
            return Err(null("mean/variance"));
        }
        let p = predict(&f.fit, &s.series, s.exog.as_ref(), t, None)?;
        ptr::copy_nonoverlapping(p.mean.as_ptr(), mean, k);
        ptr::copy_nonoverlapping(p.variance.as_ptr(), variance, k);
        Ok(())
    })
}

/// Autocovariance at lags 0..n-1 of a covariance specification given as JSON.
///
/// # Safety
/// `cov_json` must be NUL-terminated and `out` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn mw_acv(cov_json: *const c_char, n: usize, out: *mut f64) -> MwStatus {
    guard(|| {
        let cov: CovarianceSpec = json(str_arg(cov_json, "cov_json")?)?;
        let acv = cov.acv_sequence(n)?;
        if n > 0 {
            if out.is_null() {
                return Err(null("out"));
            }
            ptr::copy_nonoverlapping(acv.as_ptr(), out, n);
        }
        Ok(())
    })
}
