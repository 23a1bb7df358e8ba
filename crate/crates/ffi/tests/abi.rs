use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::ptr;

use qident_ffi::*;

fn catalog_path() -> CString {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/catalog");
    CString::new(p.to_str().unwrap()).unwrap()
}

fn open() -> *mut QidentCatalog {
    let mut cat = ptr::null_mut();
    let dir = catalog_path();
    assert_eq!(unsafe { qident_catalog_open(dir.as_ptr(), &mut cat) }, QidentStatus::Ok);
    assert!(!cat.is_null());
    cat
}

unsafe fn take(s: *mut std::ffi::c_char) -> String {
    let out = CStr::from_ptr(s).to_str().unwrap().to_owned();
    qident_string_free(s);
    out
}

fn last_error() -> String {
    let p = qident_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn catalog_handle_lists_entries() {
    let cat = open();
    let n = unsafe { qident_catalog_len(cat) };
    assert!(n >= 45);
    let mut ids = Vec::new();
    for i in 0..n {
        let mut s = ptr::null_mut();
        assert_eq!(unsafe { qident_catalog_id(cat, i, &mut s) }, QidentStatus::Ok);
        ids.push(unsafe { take(s) });
    }
    assert!(ids.iter().any(|i| i == "B1"));
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { qident_catalog_id(cat, n, &mut s) }, QidentStatus::InvalidArgument);
    assert!(s.is_null());
    unsafe { qident_catalog_free(cat) };
}

#[test]
fn verify_returns_json_report() {
    let cat = open();
    let id = CString::new("B1").unwrap();
    let mut json = ptr::null_mut();
    let st = unsafe { qident_verify_json(cat, id.as_ptr(), 2, 30, 42, &mut json) };
    assert_eq!(st, QidentStatus::Ok);
    let text = unsafe { take(json) };
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v[0]["id"], "B1");
    unsafe { qident_catalog_free(cat) };
}

#[test]
fn failing_identity_still_reports() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.qid"),
        "id: BAD\npaper: none\nsymbols: a\nlhs: qpoch(a;q;2)\nrhs: qpoch(a;q;3)\n",
    )
    .unwrap();
    let path = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut cat = ptr::null_mut();
    assert_eq!(unsafe { qident_catalog_open(path.as_ptr(), &mut cat) }, QidentStatus::Ok);
    let id = CString::new("BAD").unwrap();
    let mut json = ptr::null_mut();
    let st = unsafe { qident_verify_json(cat, id.as_ptr(), 2, 20, 1, &mut json) };
    assert_eq!(st, QidentStatus::VerificationFailed);
    assert!(unsafe { take(json) }.contains("BAD"));
    assert!(last_error().contains("BAD"));
    unsafe { qident_catalog_free(cat) };
}

#[test]
fn unknown_id_and_bad_directory() {
    let cat = open();
    let id = CString::new("nope").unwrap();
    let mut json = ptr::null_mut();
    assert_eq!(unsafe { qident_verify_json(cat, id.as_ptr(), 1, 20, 1, &mut json) }, QidentStatus::NotFound);
    assert!(json.is_null());
    assert!(last_error().contains("nope"));
    unsafe { qident_catalog_free(cat) };

    let missing = CString::new("/definitely/not/here").unwrap();
    let mut cat = ptr::null_mut();
    assert_eq!(unsafe { qident_catalog_open(missing.as_ptr(), &mut cat) }, QidentStatus::CatalogError);
    assert!(cat.is_null());
}

#[test]
fn eval_with_bindings() {
    let expr = CString::new("qpoch(a;q;2)").unwrap();
    let binds = CString::new("a=0.5, q=0.5").unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { qident_eval(expr.as_ptr(), binds.as_ptr(), 30, &mut out) }, QidentStatus::Ok);
    let text = unsafe { take(out) };
    let (re, im) = text.split_once(',').unwrap();
    assert!((re.trim().parse::<f64>().unwrap() - 0.375).abs() < 1e-15);
    assert!(im.trim().parse::<f64>().unwrap().abs() < 1e-15);
}

#[test]
fn eval_errors_map_to_codes() {
    let mut out = ptr::null_mut();
    let bad = CString::new("qpoch(a;q").unwrap();
    assert_eq!(unsafe { qident_eval(bad.as_ptr(), ptr::null(), 20, &mut out) }, QidentStatus::Syntax);
    let unbound = CString::new("theta(a; q)").unwrap();
    let binds = CString::new("a=0.3").unwrap();
    assert_eq!(
        unsafe { qident_eval(unbound.as_ptr(), binds.as_ptr(), 20, &mut out) },
        QidentStatus::InvalidArgument
    );
    assert_eq!(unsafe { qident_eval(ptr::null(), ptr::null(), 20, &mut out) }, QidentStatus::NullArgument);
    let invalid = [0xffu8, 0];
    assert_eq!(
        unsafe { qident_eval(invalid.as_ptr().cast(), ptr::null(), 20, &mut out) },
        QidentStatus::InvalidUtf8
    );
    assert!(out.is_null());
}

#[test]
fn null_handles_are_tolerated() {
    assert_eq!(unsafe { qident_catalog_len(ptr::null()) }, 0);
    unsafe {
        qident_catalog_free(ptr::null_mut());
        qident_string_free(ptr::null_mut());
    }
    let v = unsafe { CStr::from_ptr(qident_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let h = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/qident.h")).unwrap();
    for f in [
        "qident_catalog_open",
        "qident_catalog_free",
        "qident_catalog_len",
        "qident_catalog_id",
        "qident_verify_json",
        "qident_eval",
        "qident_string_free",
        "qident_last_error",
        "qident_version",
        "typedef struct QidentCatalog QidentCatalog",
        "QIDENT_STATUS_SAMPLING_EXHAUSTED",
    ] {
        assert!(h.contains(f), "header lacks {f}");
    }
}
