//! C interface to `pexpand`.
//!
//! Maps and direction fields are opaque handles created by `px_*_from_json` or
//! `px_*_builtin` and released with the matching `_free`. Every fallible call
//! returns a [`PxStatus`]; on failure the message is available from
//! [`px_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use pexpand::functional::{a_priori_bound, alpha_at, j_functional, JMode};
use pexpand::map::{itinerary, DirectionField, PiecewiseMap, DEFAULT_TOL_C};
use pexpand::Error;

/// Opaque map handle.
pub struct PxMap(PiecewiseMap);

/// Opaque direction-field handle.
pub struct PxField(DirectionField);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PxStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    UnknownName = 4,
    InvalidMap = 5,
    Precondition = 6,
    Numerical = 7,
    BufferTooSmall = 8,
    Internal = 9,
    Panic = 10,
}

/// Validation summary.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PxValidation {
    pub passed: bool,
    pub violations: usize,
    pub lambda: f64,
    pub lambda_lower: f64,
    pub critical_value: f64,
}

/// One evaluation of `J(f, v)`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PxJResult {
    pub value: f64,
    pub tail_bound: f64,
    pub terms: usize,
    /// Period of the turning point, or 0 when the series was summed.
    pub period: usize,
    pub ambiguous: bool,
    pub a_priori_bound: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> PxStatus {
    match e {
        Error::Json(_) | Error::Config(_) => PxStatus::Parse,
        Error::NonFinite
        | Error::DegreeTooHigh { .. }
        | Error::Discontinuous { .. }
        | Error::BoundaryNonZero { .. }
        | Error::InvalidMap(_) => PxStatus::InvalidMap,
        Error::Precondition(_)
        | Error::SideRequired { .. }
        | Error::OutOfInterval { .. }
        | Error::ParameterOutOfDomain { .. }
        | Error::NotPeriodic
        | Error::NotGood { .. }
        | Error::NoTransversal => PxStatus::Precondition,
        Error::Internal(_) => PxStatus::Internal,
        _ => PxStatus::Numerical,
    }
}

fn guard(body: impl FnOnce() -> Result<(), (PxStatus, String)>) -> PxStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error(String::new());
            PxStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside pexpand".into());
            PxStatus::Panic
        }
    }
}

fn lib(e: Error) -> (PxStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (PxStatus, String) {
    (PxStatus::NullPointer, format!("{what} is null"))
}

unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, (PxStatus, String)> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| (PxStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn refer<'a, T>(p: *const T, what: &str) -> Result<&'a T, (PxStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (PxStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next `px_*` call on this thread.
#[no_mangle]
pub extern "C" fn px_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn px_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parse a map from its JSON form `{"left": [...], "right": [...], "k": n}`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `map` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn px_map_from_json(json: *const c_char, map: *mut *mut PxMap) -> PxStatus {
    guard(|| {
        let slot = out(map, "map")?;
        let f: PiecewiseMap = serde_json::from_str(text(json, "json")?).map_err(|e| lib(e.into()))?;
        *slot = Box::into_raw(Box::new(PxMap(f)));
        Ok(())
    })
}

/// Built-in maps: `"full_tent"` and `"golden_tent"`.
///
/// # Safety
/// `name` must be a NUL-terminated string and `map` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn px_map_builtin(name: *const c_char, map: *mut *mut PxMap) -> PxStatus {
    guard(|| {
        let slot = out(map, "map")?;
        let f = match text(name, "name")? {
            "full_tent" => PiecewiseMap::full_tent(),
            "golden_tent" => PiecewiseMap::golden_tent(),
            other => return Err((PxStatus::UnknownName, format!("unknown map {other:?}"))),
        };
        *slot = Box::into_raw(Box::new(PxMap(f)));
        Ok(())
    })
}

/// # Safety
/// `map` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn px_map_free(map: *mut PxMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

/// Parse a direction field from `{"left": [...], "right": [...]}`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `field` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn px_field_from_json(json: *const c_char, field: *mut *mut PxField) -> PxStatus {
    guard(|| {
        let slot = out(field, "field")?;
        let v: DirectionField = serde_json::from_str(text(json, "json")?).map_err(|e| lib(e.into()))?;
        *slot = Box::into_raw(Box::new(PxField(v)));
        Ok(())
    })
}

/// Built-in fields: `"bump"`, `"odd_bump"`, `"quartic_bump"`, `"tent"`, `"zero"`, `"one"`.
///
/// # Safety
/// `name` must be a NUL-terminated string and `field` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn px_field_builtin(name: *const c_char, field: *mut *mut PxField) -> PxStatus {
    guard(|| {
        let slot = out(field, "field")?;
        let v = match text(name, "name")? {
            "bump" => DirectionField::bump(),
            "odd_bump" => DirectionField::odd_bump(),
            "quartic_bump" => DirectionField::quartic_bump(),
            "tent" => DirectionField::tent(),
            "zero" => DirectionField::zero(),
            "one" => DirectionField::constant(1.0),
            other => return Err((PxStatus::UnknownName, format!("unknown field {other:?}"))),
        };
        *slot = Box::into_raw(Box::new(PxField(v)));
        Ok(())
    })
}

/// # Safety
/// `field` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn px_field_free(field: *mut PxField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Check the defining conditions. Returns `PX_STATUS_OK` whether or not the map passes;
/// read `report.passed`.
///
/// # Safety
/// `map` must be a live handle and `report` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn px_map_validate(map: *const PxMap, report: *mut PxValidation) -> PxStatus {
    guard(|| {
        let f = &refer(map, "map")?.0;
        let slot = out(report, "report")?;
        let r = f.validate();
        *slot = PxValidation {
            passed: r.passed,
            violations: r.violations.len(),
            lambda: r.lambda,
            lambda_lower: r.lambda_lower,
            critical_value: r.critical_value,
        };
        Ok(())
    })
}

/// `f(x)` for `x` in `[-1, 1]`.
///
/// # Safety
/// `map` must be a live handle and `value` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn px_map_eval(map: *const PxMap, x: f64, value: *mut f64) -> PxStatus {
    guard(|| {
        let f = &refer(map, "map")?.0;
        let slot = out(value, "value")?;
        *slot = f.eval(x, 0, None).map_err(lib)?;
        Ok(())
    })
}

/// `J(f, v)` to tolerance `tol`.
///
/// # Safety
/// `map` and `field` must be live handles and `result` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn px_j(map: *const PxMap, field: *const PxField, tol: f64, result: *mut PxJResult) -> PxStatus {
    guard(|| {
        let f = &refer(map, "map")?.0;
        let v = &refer(field, "field")?.0;
        let slot = out(result, "result")?;
        f.require_valid().map_err(lib)?;
        let j = j_functional(f, v, tol).map_err(lib)?;
        *slot = PxJResult {
            value: j.value,
            tail_bound: j.tail_bound,
            terms: j.terms,
            period: match j.mode {
                JMode::Periodic { period } => period,
                JMode::Series => 0,
            },
            ambiguous: j.is_ambiguous(),
            a_priori_bound: a_priori_bound(f, v),
        };
        Ok(())
    })
}

/// The solution `alpha` of the twisted cohomological equation, evaluated at `x`.
///
/// # Safety
/// `map` and `field` must be live handles and `value` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn px_alpha(
    map: *const PxMap,
    field: *const PxField,
    x: f64,
    tol: f64,
    value: *mut f64,
) -> PxStatus {
    guard(|| {
        let f = &refer(map, "map")?.0;
        let v = &refer(field, "field")?.0;
        let slot = out(value, "value")?;
        f.require_valid().map_err(lib)?;
        *slot = alpha_at(f, v, x, tol).map_err(lib)?;
        Ok(())
    })
}

/// First `n` itinerary symbols of `x` (`L`, `C`, `R`) written to `buf` with a trailing NUL.
/// `buf_len` must be at least `n + 1`.
///
/// # Safety
/// `map` must be a live handle and `buf` must hold `buf_len` bytes.
#[no_mangle]
pub unsafe extern "C" fn px_itinerary(map: *const PxMap, x: f64, n: usize, buf: *mut c_char, buf_len: usize) -> PxStatus {
    guard(|| {
        let f = &refer(map, "map")?.0;
        if buf.is_null() {
            return Err(null("buf"));
        }
        if buf_len < n.saturating_add(1) {
            return Err((PxStatus::BufferTooSmall, format!("need {} bytes, have {buf_len}", n + 1)));
        }
        if !(-1.0..=1.0).contains(&x) {
            return Err(lib(Error::OutOfInterval { x }));
        }
        let word = itinerary(f, x, n, DEFAULT_TOL_C).to_string();
        let dst = std::slice::from_raw_parts_mut(buf.cast::<u8>(), n + 1);
        dst[..n].copy_from_slice(word.as_bytes());
        dst[n] = 0;
        Ok(())
    })
}
