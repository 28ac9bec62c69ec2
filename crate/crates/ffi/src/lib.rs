//! C interface to bifurkit.
//!
//! Handles are opaque and owned by the caller once returned; release each with its
//! `_free` function. Every call returns a [`BkStatus`]; on failure the message is
//! available from [`bk_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use bifurkit::lsred::{self, LocalAnalysis};
use bifurkit::matcurve::{self, SpectrumReport};
use bifurkit::problems::{self, Problem, ProblemSpec};
use bifurkit::Error;
use nalgebra::DVector;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    ConfigError = 4,
    NumericalFailure = 5,
    OutOfRange = 6,
    Panic = 7,
}

/// A discretized problem.
pub struct BkProblem(Problem);

/// Generalized spectrum of a problem's trivial-branch linearization.
pub struct BkSpectrum(SpectrumReport);

/// Result of a local analysis at a singular point.
pub struct BkLocalReport(LocalAnalysis);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn status_of(e: &Error) -> BkStatus {
    match e {
        Error::InvalidArgument(_) | Error::InvalidInterval(..) | Error::DimensionMismatch(_) => BkStatus::InvalidArgument,
        _ => BkStatus::NumericalFailure,
    }
}

fn fail(status: BkStatus, msg: impl Into<String>) -> BkStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> BkStatus) -> BkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(BkStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

fn lib_err(e: Error) -> BkStatus {
    fail(status_of(&e), e.to_string())
}

fn give<T>(out: *mut *mut T, v: T) -> BkStatus {
    // SAFETY: callers check `out` for null before building `v`
    unsafe { *out = Box::into_raw(Box::new(v)) };
    BkStatus::Ok
}

/// Message of the last failed call on this thread, or null. The pointer stays valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bk_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map(|s| s.as_ptr()).unwrap_or(ptr::null()))
}

/// Builds a problem from a JSON problem description such as
/// `{"kind":"degenerate_1d","n":200}`.
///
/// # Safety
/// `json` must be null or a valid NUL-terminated string; `out` must be null or a
/// valid pointer to writable storage for one handle pointer.
#[no_mangle]
pub unsafe extern "C" fn bk_problem_from_json(json: *const c_char, out: *mut *mut BkProblem) -> BkStatus {
    guard(|| {
        if json.is_null() || out.is_null() {
            return fail(BkStatus::NullPointer, "null argument");
        }
        let text = match CStr::from_ptr(json).to_str() {
            Ok(t) => t,
            Err(e) => return fail(BkStatus::InvalidUtf8, e.to_string()),
        };
        let spec: ProblemSpec = match serde_json::from_str(text) {
            Ok(s) => s,
            Err(e) => return fail(BkStatus::ConfigError, format!("line {}, column {}: {e}", e.line(), e.column())),
        };
        match spec.build() {
            Ok(p) => give(out, BkProblem(p)),
            Err(e) => fail(BkStatus::ConfigError, e.to_string()),
        }
    })
}

/// The degenerate one-dimensional example on n interior points (n ≥ 50).
///
/// # Safety
/// `out` must be null or a valid pointer to writable storage for one handle pointer.
#[no_mangle]
pub unsafe extern "C" fn bk_problem_degenerate_1d(n: usize, out: *mut *mut BkProblem) -> BkStatus {
    guard(|| {
        if out.is_null() {
            return fail(BkStatus::NullPointer, "null argument");
        }
        match problems::make_degenerate_1d(n) {
            Ok(p) => give(out, BkProblem(p)),
            Err(e) => lib_err(e),
        }
    })
}

/// Number of unknowns, or 0 for a null handle.
///
/// # Safety
/// `p` must be null or a handle returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bk_problem_len(p: *const BkProblem) -> usize {
    p.as_ref().map(|p| p.0.n()).unwrap_or(0)
}

/// # Safety
/// `p` must be null or a handle returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bk_problem_free(p: *mut BkProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Generalized spectrum of the linearization at u = 0 on (a, b).
///
/// # Safety
/// `p` must be a live problem handle; `out` must be null or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn bk_spectrum(p: *const BkProblem, a: f64, b: f64, out: *mut *mut BkSpectrum) -> BkStatus {
    guard(|| {
        let (Some(p), false) = (p.as_ref(), out.is_null()) else {
            return fail(BkStatus::NullPointer, "null argument");
        };
        match matcurve::generalized_spectrum(&p.0.linearization_curve(), a, b) {
            Ok(s) => give(out, BkSpectrum(s)),
            Err(e) => lib_err(e),
        }
    })
}

/// Number of eigenvalues, or 0 for a null handle.
///
/// # Safety
/// `s` must be null or a live spectrum handle.
#[no_mangle]
pub unsafe extern "C" fn bk_spectrum_len(s: *const BkSpectrum) -> usize {
    s.as_ref().map(|s| s.0.eigenvalues.len()).unwrap_or(0)
}

/// The i-th eigenvalue (increasing order) and its multiplicity.
///
/// # Safety
/// `s` must be a live spectrum handle; `lambda` and `chi` must be null or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn bk_spectrum_get(s: *const BkSpectrum, i: usize, lambda: *mut f64, chi: *mut usize) -> BkStatus {
    guard(|| {
        let Some(s) = s.as_ref() else {
            return fail(BkStatus::NullPointer, "null spectrum");
        };
        let Some(e) = s.0.eigenvalues.get(i) else {
            return fail(BkStatus::OutOfRange, format!("index {i} out of range ({} eigenvalues)", s.0.eigenvalues.len()));
        };
        if !lambda.is_null() {
            *lambda = e.lambda;
        }
        if !chi.is_null() {
            *chi = e.chi;
        }
        BkStatus::Ok
    })
}

/// # Safety
/// `s` must be null or a spectrum handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bk_spectrum_free(s: *mut BkSpectrum) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Algebraic multiplicity of the linearization at u = 0 at λ0.
///
/// # Safety
/// `p` must be a live problem handle; `out` must be null or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn bk_chi(p: *const BkProblem, lambda0: f64, out: *mut usize) -> BkStatus {
    guard(|| {
        let (Some(p), false) = (p.as_ref(), out.is_null()) else {
            return fail(BkStatus::NullPointer, "null argument");
        };
        match matcurve::chi(&p.0.linearization_curve(), lambda0) {
            Ok(c) => {
                *out = c;
                BkStatus::Ok
            }
            Err(e) => lib_err(e),
        }
    })
}

/// Local analysis at (λ0, u0). `u0` may be null with `len == 0` for the zero state.
///
/// # Safety
/// `p` must be a live problem handle; `u0` must be null or point to `len` doubles;
/// `out` must be null or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn bk_local_analysis(
    p: *const BkProblem,
    lambda0: f64,
    u0: *const f64,
    len: usize,
    out: *mut *mut BkLocalReport,
) -> BkStatus {
    guard(|| {
        let (Some(p), false) = (p.as_ref(), out.is_null()) else {
            return fail(BkStatus::NullPointer, "null argument");
        };
        let u = if u0.is_null() {
            if len != 0 {
                return fail(BkStatus::NullPointer, "null state with nonzero length");
            }
            p.0.zero_state()
        } else {
            if len != p.0.n() {
                return fail(BkStatus::InvalidArgument, format!("state length {len}, problem has {}", p.0.n()));
            }
            DVector::from_column_slice(std::slice::from_raw_parts(u0, len))
        };
        match lsred::local_analysis(&p.0, lambda0, &u) {
            Ok(r) => give(out, BkLocalReport(r)),
            Err(e) => lib_err(e),
        }
    })
}

/// χ of a local report, or 0 for null.
///
/// # Safety
/// `r` must be null or a live local report handle.
#[no_mangle]
pub unsafe extern "C" fn bk_local_chi(r: *const BkLocalReport) -> usize {
    r.as_ref().map(|r| r.0.chi).unwrap_or(0)
}

/// Number of real half-branches, or 0 for null.
///
/// # Safety
/// `r` must be null or a live local report handle.
#[no_mangle]
pub unsafe extern "C" fn bk_local_half_branch_count(r: *const BkLocalReport) -> usize {
    r.as_ref().map(|r| r.0.report.half_branch_count).unwrap_or(0)
}

/// The full report as JSON; release the string with [`bk_string_free`].
///
/// # Safety
/// `r` must be a live local report handle; `out` must be null or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn bk_local_to_json(r: *const BkLocalReport, out: *mut *mut c_char) -> BkStatus {
    guard(|| {
        let (Some(r), false) = (r.as_ref(), out.is_null()) else {
            return fail(BkStatus::NullPointer, "null argument");
        };
        let s = match serde_json::to_string(&r.0) {
            Ok(s) => s,
            Err(e) => return fail(BkStatus::NumericalFailure, e.to_string()),
        };
        match CString::new(s) {
            Ok(c) => {
                *out = c.into_raw();
                BkStatus::Ok
            }
            Err(e) => fail(BkStatus::NumericalFailure, e.to_string()),
        }
    })
}

/// # Safety
/// `r` must be null or a local report handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bk_local_free(r: *mut BkLocalReport) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bk_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
