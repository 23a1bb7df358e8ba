//! C ABI over the `qident` engine and verifier.
//!
//! Every function returns a [`QidentStatus`]; on failure a message is kept
//! per thread and can be read with [`qident_last_error`]. Strings handed out
//! by the library must be released with [`qident_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use qident::catalog::Catalog;
use qident::expr::{free_symbols, parse, ParamEnv};
use qident::verifier::{to_json, verify, SampleConfig};
use qident::{Error, PrecisionComplex, QBase, TruncationControl};

/// Result codes of every exported function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QidentStatus {
    Ok = 0,
    /// The identity was evaluated but did not verify.
    VerificationFailed = 1,
    NullArgument = 2,
    InvalidUtf8 = 3,
    Syntax = 4,
    NotFound = 5,
    CatalogError = 6,
    EvaluationError = 7,
    SamplingExhausted = 8,
    InvalidArgument = 9,
    Panic = 10,
}

/// Opaque handle to a loaded catalog.
pub struct QidentCatalog {
    inner: Catalog,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> QidentStatus {
    match err.root() {
        Error::Syntax { .. } | Error::UnknownSymbol(_) => QidentStatus::Syntax,
        Error::NotFound(_) => QidentStatus::NotFound,
        Error::Catalog { .. } | Error::DuplicateId(_) | Error::UndeclaredSymbol { .. } | Error::Io(_) => {
            QidentStatus::CatalogError
        }
        Error::SamplingExhausted { .. } => QidentStatus::SamplingExhausted,
        Error::InvalidNumber(_) | Error::InvalidBase(_) => QidentStatus::InvalidArgument,
        _ => QidentStatus::EvaluationError,
    }
}

fn fail(err: Error) -> QidentStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

/// Runs `f`, turning panics into [`QidentStatus::Panic`].
fn guard(f: impl FnOnce() -> QidentStatus) -> QidentStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic");
            QidentStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, QidentStatus> {
    if p.is_null() {
        set_error("null pointer argument");
        return Err(QidentStatus::NullArgument);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error("argument is not valid UTF-8");
        QidentStatus::InvalidUtf8
    })
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> QidentStatus {
    match CString::new(s) {
        Ok(c) => {
            *out = c.into_raw();
            QidentStatus::Ok
        }
        Err(_) => {
            set_error("output contains a NUL byte");
            QidentStatus::EvaluationError
        }
    }
}

/// Message of the last failed call on this thread, or NULL. Owned by the
/// library and valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn qident_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn qident_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads the catalog in `dir`, or the default catalog when `dir` is NULL.
///
/// # Safety
/// `dir` is NULL or a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qident_catalog_open(dir: *const c_char, out: *mut *mut QidentCatalog) -> QidentStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer");
            return QidentStatus::NullArgument;
        }
        *out = ptr::null_mut();
        let loaded = if dir.is_null() {
            Catalog::load_default()
        } else {
            match read_str(dir) {
                Ok(d) => Catalog::load(Path::new(d)),
                Err(s) => return s,
            }
        };
        match loaded {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(QidentCatalog { inner }));
                QidentStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Frees a catalog handle. NULL is ignored.
///
/// # Safety
/// `cat` must come from [`qident_catalog_open`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn qident_catalog_free(cat: *mut QidentCatalog) {
    if !cat.is_null() {
        drop(Box::from_raw(cat));
    }
}

/// Number of identities in the catalog; 0 for NULL.
///
/// # Safety
/// `cat` is NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qident_catalog_len(cat: *const QidentCatalog) -> usize {
    cat.as_ref().map_or(0, |c| c.inner.len())
}

/// Id of the identity at `index`, as a new string.
///
/// # Safety
/// `cat` is a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qident_catalog_id(
    cat: *const QidentCatalog,
    index: usize,
    out: *mut *mut c_char,
) -> QidentStatus {
    guard(|| {
        let (Some(cat), false) = (cat.as_ref(), out.is_null()) else {
            set_error("null argument");
            return QidentStatus::NullArgument;
        };
        match cat.inner.identities().get(index) {
            Some(i) => write_string(out, i.id.clone()),
            None => {
                set_error(format!("index {index} out of range"));
                QidentStatus::InvalidArgument
            }
        }
    })
}

/// Verifies identity `id` (or an alias) and writes the JSON report.
///
/// Returns [`QidentStatus::VerificationFailed`] with the report still written
/// when some trial fails.
///
/// # Safety
/// `cat` is a live handle, `id` a NUL-terminated string, `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn qident_verify_json(
    cat: *const QidentCatalog,
    id: *const c_char,
    trials: u32,
    digits: u32,
    seed: u64,
    out_json: *mut *mut c_char,
) -> QidentStatus {
    guard(|| {
        let (Some(cat), false) = (cat.as_ref(), out_json.is_null()) else {
            set_error("null argument");
            return QidentStatus::NullArgument;
        };
        *out_json = ptr::null_mut();
        let id = match read_str(id) {
            Ok(s) => s,
            Err(s) => return s,
        };
        let cfg = SampleConfig { trials: trials as usize, digits, seed, ..SampleConfig::default() };
        if let Err(e) = cfg.validate() {
            return fail(e);
        }
        let report = match cat.inner.get(id).and_then(|i| verify(i, &cfg)) {
            Ok(r) => r,
            Err(e) => return fail(e),
        };
        let passed = report.passed();
        let exhausted = report.aggregate.sampling_exhausted;
        let status = write_string(out_json, to_json(std::slice::from_ref(&report)));
        if status != QidentStatus::Ok {
            return status;
        }
        if exhausted {
            set_error(format!("{id}: sampling exhausted"));
            QidentStatus::SamplingExhausted
        } else if !passed {
            set_error(format!("{id}: {}", report.summary()));
            QidentStatus::VerificationFailed
        } else {
            QidentStatus::Ok
        }
    })
}

/// Evaluates `expr` with `bindings` of the form `"a=0.3+0.1i, q=0.4"` and
/// writes the value as `"re,im"`.
///
/// # Safety
/// `expr` is a NUL-terminated string, `bindings` NULL or one, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qident_eval(
    expr: *const c_char,
    bindings: *const c_char,
    digits: u32,
    out: *mut *mut c_char,
) -> QidentStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer");
            return QidentStatus::NullArgument;
        }
        *out = ptr::null_mut();
        let text = match read_str(expr) {
            Ok(s) => s,
            Err(s) => return s,
        };
        let binds = if bindings.is_null() {
            ""
        } else {
            match read_str(bindings) {
                Ok(s) => s,
                Err(s) => return s,
            }
        };
        let e = match parse(text) {
            Ok(e) => e,
            Err(err) => return fail(err),
        };
        let digits = digits.max(15);
        let mut q = None;
        let mut values = Vec::new();
        for part in binds.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let Some((name, value)) = part.split_once('=') else {
                set_error(format!("expected name=value, got `{part}`"));
                return QidentStatus::InvalidArgument;
            };
            let v = match PrecisionComplex::parse(value.trim(), digits) {
                Ok(v) => v,
                Err(err) => return fail(err),
            };
            match name.trim() {
                "q" => q = Some(v),
                n => values.push((n.to_string(), v)),
            }
        }
        let q = match q {
            Some(q) => q,
            None if !free_symbols(&e).contains("q") => PrecisionComplex::real(0.5, digits),
            None => {
                set_error("expression uses q but no q binding was given");
                return QidentStatus::InvalidArgument;
            }
        };
        let mut env = match QBase::new(q) {
            Ok(q) => ParamEnv::new(q),
            Err(err) => return fail(err),
        };
        for (k, v) in values {
            env = env.with(&k, v);
        }
        match e.eval(&env, &TruncationControl::for_digits(digits)) {
            Ok(v) => write_string(out, v.to_pair_string(digits as usize)),
            Err(err) => fail(err),
        }
    })
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn qident_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
