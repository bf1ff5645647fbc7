//! C interface to the fitting engine.
//!
//! Every function returns a [`QmStatus`]. Results come back through out
//! pointers; objects are opaque handles released with the matching `*_free`
//! function. After a failure, `qm_last_error_message` describes it for the
//! calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use qmodel::config::{space_from_bits, BitSpec};
use qmodel::report::{ReportDocument, Telemetry};
use qmodel::trimmer::{run_fit, FitReport, TrimConfig};
use qmodel::{Arity, DataTable, Error, ExprModel, NoiseKind, NoiseSpec, ParameterSpace};

/// Outcome of a call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Range = 4,
    Degenerate = 5,
    Numeric = 6,
    Io = 7,
    Internal = 8,
    Panic = 9,
}

pub struct QmData {
    inner: DataTable,
}

pub struct QmModel {
    inner: ExprModel,
}

pub struct QmSpace {
    inner: ParameterSpace,
}

pub struct QmReport {
    inner: FitReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> QmStatus {
    match e {
        Error::Parse { .. } | Error::Report(_) => QmStatus::Parse,
        Error::Range { .. } | Error::Overflow { .. } => QmStatus::Range,
        Error::DegenerateMeasure(_) => QmStatus::Degenerate,
        Error::Domain(_) | Error::CertificateFailure { .. } | Error::NonTermination { .. } => QmStatus::Numeric,
        Error::Io(_) | Error::Data { .. } => QmStatus::Io,
        Error::Consistency(_) => QmStatus::Internal,
        Error::Shape(_) | Error::UnsupportedShape(_) | Error::Precondition(_) | Error::Config(_) => {
            QmStatus::InvalidArgument
        }
    }
}

struct Fail(QmStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(QmStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> QmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            QmStatus::Ok
        }
        Ok(Err(Fail(s, m))) => {
            set_error(m);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            QmStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(QmStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(value);
    Ok(())
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

fn c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).unwrap_or_default().into_raw()
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn qm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn qm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Evaluate `expr` over a grid with side lengths `dims` and add noise
/// (`"none"`, `"uniform:W"` or `"gaussian:S"`) drawn from `seed`.
///
/// # Safety
/// Pointers must be valid; `dims` must hold `ndims` entries.
#[no_mangle]
pub unsafe extern "C" fn qm_data_generate(
    expr: *const c_char,
    dims: *const usize,
    ndims: usize,
    noise: *const c_char,
    seed: u64,
    out: *mut *mut QmData,
) -> QmStatus {
    guard(|| {
        let expr = text(expr, "expr")?;
        let dims = slice(dims, ndims, "dims")?;
        let kind: NoiseKind = if noise.is_null() { NoiseKind::None } else { text(noise, "noise")?.parse()? };
        let table = qmodel::data::generate(expr, dims, &NoiseSpec { kind, seed })?;
        put(out, boxed(QmData { inner: table }))
    })
}

/// Build a table from row-major values.
///
/// # Safety
/// `dims` must hold `ndims` entries and `values` `len` entries.
#[no_mangle]
pub unsafe extern "C" fn qm_data_from_values(
    dims: *const usize,
    ndims: usize,
    values: *const i64,
    len: usize,
    out: *mut *mut QmData,
) -> QmStatus {
    guard(|| {
        let dims = slice(dims, ndims, "dims")?.to_vec();
        let values = slice(values, len, "values")?.to_vec();
        put(out, boxed(QmData { inner: DataTable::from_values(dims, values)? }))
    })
}

/// Read a CSV table with header `x1,...,xd,f`.
///
/// # Safety
/// `path` must be a valid C string.
#[no_mangle]
pub unsafe extern "C" fn qm_data_from_csv(path: *const c_char, out: *mut *mut QmData) -> QmStatus {
    guard(|| {
        let path = text(path, "path")?;
        let table = qmodel::data::read_csv(Path::new(path))?;
        put(out, boxed(QmData { inner: table }))
    })
}

/// Number of grid points.
///
/// # Safety
/// `data` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn qm_data_len(data: *const QmData, out: *mut usize) -> QmStatus {
    guard(|| put(out, handle(data, "data")?.inner.len()))
}

/// # Safety
/// `data` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn qm_data_free(data: *mut QmData) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Parse a trial model in `x1..x{inputs}` and `y1..y{params}`.
///
/// # Safety
/// `source` must be a valid C string.
#[no_mangle]
pub unsafe extern "C" fn qm_model_parse(
    source: *const c_char,
    inputs: usize,
    params: usize,
    out: *mut *mut QmModel,
) -> QmStatus {
    guard(|| {
        let source = text(source, "source")?;
        let model = ExprModel::parse(source, Arity::new(inputs, params))?;
        put(out, boxed(QmModel { inner: model }))
    })
}

/// # Safety
/// `model` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn qm_model_free(model: *mut QmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// A parameter space with fields `y1..y{count}`; `is_signed[i]` nonzero makes
/// field `i` two's-complement. `is_signed` may be null for all unsigned.
///
/// # Safety
/// `bits` must hold `count` entries, and so must `is_signed` when not null.
#[no_mangle]
pub unsafe extern "C" fn qm_space_new(
    bits: *const u32,
    is_signed: *const u8,
    count: usize,
    out: *mut *mut QmSpace,
) -> QmStatus {
    guard(|| {
        let bits = slice(bits, count, "bits")?;
        let signs = if is_signed.is_null() { &[][..] } else { slice(is_signed, count, "is_signed")? };
        let specs: Vec<BitSpec> = bits
            .iter()
            .enumerate()
            .map(|(i, &b)| BitSpec {
                name: format!("y{}", i + 1),
                bits: b,
                signed: signs.get(i).is_some_and(|&s| s != 0),
            })
            .collect();
        put(out, boxed(QmSpace { inner: space_from_bits(&specs)? }))
    })
}

/// Text such as `y1=1 y2=16..17`. Free with `qm_string_free`.
///
/// # Safety
/// `space` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn qm_space_describe(space: *const QmSpace, out: *mut *mut c_char) -> QmStatus {
    guard(|| put(out, c_string(handle(space, "space")?.inner.describe())))
}

/// Decoded range of field `index`.
///
/// # Safety
/// `space` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn qm_space_range(
    space: *const QmSpace,
    index: usize,
    low: *mut i64,
    high: *mut i64,
) -> QmStatus {
    guard(|| {
        let f = handle(space, "space")?.inner.field(index)?;
        put(low, f.low())?;
        put(high, f.high())
    })
}

/// # Safety
/// `space` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn qm_space_free(space: *mut QmSpace) {
    if !space.is_null() {
        drop(Box::from_raw(space));
    }
}

/// Mean shape measure over the space at modulus `2^exponent`, i.e. the
/// probability of measuring `z = 0`.
///
/// # Safety
/// Handles must be live.
#[no_mangle]
pub unsafe extern "C" fn qm_expected_q(
    data: *const QmData,
    model: *const QmModel,
    space: *const QmSpace,
    exponent: u32,
    out: *mut f64,
) -> QmStatus {
    guard(|| {
        let m = qmodel::Sensitivity::new(exponent)?.modulus();
        let v = qmodel::measure::expected_q(
            &handle(data, "data")?.inner,
            &handle(model, "model")?.inner,
            &handle(space, "space")?.inner,
            m,
        )?;
        put(out, v)
    })
}

/// Run the full trimming loop in exact mode with the given threshold and
/// default sensitivity band.
///
/// # Safety
/// Handles must be live.
#[no_mangle]
pub unsafe extern "C" fn qm_fit_run(
    data: *const QmData,
    model: *const QmModel,
    space: *const QmSpace,
    threshold: f64,
    out: *mut *mut QmReport,
) -> QmStatus {
    guard(|| {
        let config = TrimConfig {
            threshold,
            ..Default::default()
        };
        let fit = run_fit(
            &handle(data, "data")?.inner,
            &handle(model, "model")?.inner,
            &handle(space, "space")?.inner,
            &config,
        )?;
        put(out, boxed(QmReport { inner: fit }))
    })
}

/// Copy of the trimmed space.
///
/// # Safety
/// `report` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn qm_report_final_space(report: *const QmReport, out: *mut *mut QmSpace) -> QmStatus {
    guard(|| {
        let space = handle(report, "report")?.inner.final_space.clone();
        put(out, boxed(QmSpace { inner: space }))
    })
}

/// The report in the versioned text format. Free with `qm_string_free`.
///
/// # Safety
/// `report` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn qm_report_to_text(report: *const QmReport, out: *mut *mut c_char) -> QmStatus {
    guard(|| {
        let fit = handle(report, "report")?.inner.clone();
        let doc = ReportDocument {
            config: Vec::new(),
            telemetry: Telemetry {
                evaluations: fit.evaluations,
                wall_clock_ms: 0,
            },
            fit,
        };
        put(out, c_string(doc.to_text()))
    })
}

/// # Safety
/// `report` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn qm_report_free(report: *mut QmReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Closed-form `P(z = 0)` for linear regression at `N = L + K + r`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qm_p_zero_integral(r: i32, ystar: f64, out: *mut f64) -> QmStatus {
    guard(|| put(out, qmodel::analysis::p_zero_integral(r, ystar)?))
}
