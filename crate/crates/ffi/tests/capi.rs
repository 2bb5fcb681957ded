//! Exercises the C ABI through the exported symbols, the way a foreign
//! binding would.

use std::ffi::{CStr, CString};
use std::ptr;

use lexcov_ffi::*;

const GRAMMAR: &str = include_str!("../../core/src/grammars/paper.lex");

fn compile(text: &str) -> *mut LexcovLexicon {
    let c = CString::new(text).unwrap();
    let mut handle: *mut LexcovLexicon = ptr::null_mut();
    let status = unsafe { lexcov_compile(c.as_ptr(), 0, &mut handle) };
    assert_eq!(status, LexcovStatus::Ok);
    assert!(!handle.is_null());
    handle
}

fn take_string(p: *mut libc::c_char) -> String {
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string();
    unsafe { lexcov_string_free(p) };
    s
}

#[test]
fn compile_follow_derive_and_free() {
    let lex = compile(GRAMMAR);

    let mut out: *mut libc::c_char = ptr::null_mut();
    assert_eq!(unsafe { lexcov_follow(lex, &mut out) }, LexcovStatus::Ok);
    assert_eq!(
        take_string(out),
        "follow(1, [2, 3, 4]).\nfollow(2, [1, 3, 4]).\nfollow(3, [3, 4]).\nfollow(4, []).\n"
    );

    let entry = CString::new("e1").unwrap();
    let mut out: *mut libc::c_char = ptr::null_mut();
    assert_eq!(
        unsafe { lexcov_derive(lex, entry.as_ptr(), 32, &mut out) },
        LexcovStatus::Ok
    );
    let derived = take_string(out);
    assert_eq!(derived.lines().count(), 7);

    let mut out: *mut libc::c_char = ptr::null_mut();
    assert_eq!(
        unsafe { lexcov_fsa_dot(lex, entry.as_ptr(), false, &mut out) },
        LexcovStatus::Ok
    );
    let dot = take_string(out);
    assert!(dot.starts_with("digraph"));
    assert!(dot.contains("q4 -> q4"));

    let mut out: *mut libc::c_char = ptr::null_mut();
    assert_eq!(unsafe { lexcov_artifact(lex, &mut out) }, LexcovStatus::Ok);
    assert!(take_string(out).contains("[ENTRIES]"));

    unsafe { lexcov_lexicon_free(lex) };
}

#[test]
fn lookup_matches_the_runtime() {
    let lex = compile(GRAMMAR);
    let query = CString::new("(C: t_2 & (Z: <>))").unwrap();
    let mut out: *mut libc::c_char = ptr::null_mut();
    assert_eq!(
        unsafe { lexcov_lookup(lex, query.as_ptr(), 32, &mut out) },
        LexcovStatus::Ok
    );
    let text = take_string(out);
    assert_eq!(text.lines().count(), 2, "{text}");
    assert!(text.lines().all(|l| l.starts_with("e1 : ")));
    unsafe { lexcov_lexicon_free(lex) };
}

#[test]
fn status_codes_and_last_error() {
    // Parse error.
    let bad = CString::new("rule r1 : (B: -) ==> .").unwrap();
    let mut handle: *mut LexcovLexicon = ptr::null_mut();
    let status = unsafe { lexcov_compile(bad.as_ptr(), 0, &mut handle) };
    assert_eq!(status, LexcovStatus::Parse);
    assert!(handle.is_null());
    let msg = take_string(lexcov_last_error());
    assert!(msg.contains("expected an AVM"), "{msg}");

    // Signature error.
    let bad = CString::new("type a sub {b}. type b sub {a}.").unwrap();
    let status = unsafe { lexcov_compile(bad.as_ptr(), 0, &mut handle) };
    assert_eq!(status, LexcovStatus::Signature);

    // Query errors.
    let lex = compile(GRAMMAR);
    let nope = CString::new("nope").unwrap();
    let mut out: *mut libc::c_char = ptr::null_mut();
    assert_eq!(
        unsafe { lexcov_derive(lex, nope.as_ptr(), 8, &mut out) },
        LexcovStatus::Query
    );
    let msg = take_string(lexcov_last_error());
    assert!(msg.contains("unknown entry"));

    // Null arguments.
    assert_eq!(
        unsafe { lexcov_compile(ptr::null(), 0, &mut handle) },
        LexcovStatus::NullArgument
    );
    assert_eq!(
        unsafe { lexcov_follow(ptr::null(), &mut out) },
        LexcovStatus::NullArgument
    );
    unsafe { lexcov_lexicon_free(lex) };
}

#[test]
fn unfurl_depth_is_honored() {
    let c = CString::new(GRAMMAR).unwrap();
    let mut handle: *mut LexcovLexicon = ptr::null_mut();
    assert_eq!(
        unsafe { lexcov_compile(c.as_ptr(), 1, &mut handle) },
        LexcovStatus::Ok
    );
    let entry = CString::new("e1").unwrap();
    let mut out: *mut libc::c_char = ptr::null_mut();
    assert_eq!(
        unsafe { lexcov_fsa_dot(handle, entry.as_ptr(), false, &mut out) },
        LexcovStatus::Ok
    );
    let dot = take_string(out);
    assert!(!dot.contains("q4 -> q4"), "{dot}");
    unsafe { lexcov_lexicon_free(handle) };
}

#[test]
fn version_and_header_exist() {
    let v = take_string(lexcov_version());
    assert!(!v.is_empty());
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/lexcov.h");
    let text = std::fs::read_to_string(header).expect("cbindgen header generated");
    assert!(text.contains("lexcov_compile"));
    assert!(text.contains("LexcovStatus"));
    assert!(text.contains("typedef struct LexcovLexicon LexcovLexicon;"));
}
