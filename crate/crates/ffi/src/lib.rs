//! C ABI over the lexical rule compiler: opaque lexicon handles, status
//! codes matching the CLI's exit classes, and caller-freed strings.
//!
//! Every function is panic-safe. On a non-OK status the thread-local error
//! message is set and can be fetched with [`lexcov_last_error`]. All strings
//! returned through `char**` out-parameters (and by `lexcov_last_error`) are
//! owned by the caller and must be released with [`lexcov_string_free`].

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use libc::c_char;

use lexcov::compile::{compile_text, CompileError, CompiledLexicon, RunConfig};
use lexcov::grammar;

/// Status codes; non-zero values mirror the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LexcovStatus {
    Ok = 0,
    Io = 1,
    Parse = 2,
    Signature = 3,
    Compile = 4,
    Query = 5,
    NullArgument = 6,
    Utf8 = 7,
    Panic = 8,
}

/// Opaque handle to a compiled lexicon.
pub struct LexcovLexicon {
    inner: CompiledLexicon,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<Vec<u8>>) {
    let cstring = CString::new(message).unwrap_or_else(|_| CString::new("invalid error").unwrap());
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(cstring));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s)
        .map(CString::into_raw)
        .unwrap_or(ptr::null_mut())
}

/// # Safety
/// `ptr` must be NULL or a valid NUL-terminated string for the duration of
/// the call.
unsafe fn read_str<'a>(ptr: *const c_char) -> Result<&'a str, LexcovStatus> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(LexcovStatus::NullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        LexcovStatus::Utf8
    })
}

fn guard(body: impl FnOnce() -> LexcovStatus) -> LexcovStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            LexcovStatus::Panic
        }
    }
}

fn status_for(e: &CompileError) -> LexcovStatus {
    match e {
        CompileError::Parse(_) => LexcovStatus::Parse,
        CompileError::Signature(_) => LexcovStatus::Signature,
        CompileError::Lower { .. } | CompileError::Rule(_) | CompileError::Duplicate { .. } => {
            LexcovStatus::Compile
        }
    }
}

/// Returns the crate version as a caller-freed string.
#[no_mangle]
pub extern "C" fn lexcov_version() -> *mut c_char {
    to_c_string(env!("CARGO_PKG_VERSION").to_string())
}

/// Returns and clears the thread-local error message, or NULL when no error
/// has been recorded. The caller frees it.
#[no_mangle]
pub extern "C" fn lexcov_last_error() -> *mut c_char {
    LAST_ERROR.with(|e| match e.borrow_mut().take() {
        Some(msg) => msg.into_raw(),
        None => ptr::null_mut(),
    })
}

/// Frees a string previously returned by this library.
///
/// # Safety
/// `s` must be NULL or a pointer obtained from a `lexcov_*` function and not
/// freed before.
#[no_mangle]
pub unsafe extern "C" fn lexcov_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Compiles a grammar from source text. On success writes a fresh handle to
/// `out`; release it with [`lexcov_lexicon_free`].
///
/// # Safety
/// `grammar_text` must be a valid NUL-terminated string and `out` a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn lexcov_compile(
    grammar_text: *const c_char,
    unfurl_depth: u32,
    out: *mut *mut LexcovLexicon,
) -> LexcovStatus {
    guard(|| {
        clear_error();
        if out.is_null() {
            set_error("null output pointer");
            return LexcovStatus::NullArgument;
        }
        let text = match read_str(grammar_text) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let config = RunConfig {
            unfurl_depth: unfurl_depth as usize,
            ..RunConfig::default()
        };
        match compile_text(text, config) {
            Ok(lex) => {
                *out = Box::into_raw(Box::new(LexcovLexicon { inner: lex }));
                LexcovStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                status_for(&e)
            }
        }
    })
}

/// Releases a lexicon handle.
///
/// # Safety
/// `lex` must be NULL or a handle from [`lexcov_compile`], not freed before.
#[no_mangle]
pub unsafe extern "C" fn lexcov_lexicon_free(lex: *mut LexcovLexicon) {
    if !lex.is_null() {
        drop(Box::from_raw(lex));
    }
}

unsafe fn with_lexicon<'a>(lex: *const LexcovLexicon) -> Result<&'a CompiledLexicon, LexcovStatus> {
    if lex.is_null() {
        set_error("null lexicon handle");
        return Err(LexcovStatus::NullArgument);
    }
    Ok(&(*lex).inner)
}

unsafe fn write_out(out: *mut *mut c_char, s: String) -> LexcovStatus {
    if out.is_null() {
        set_error("null output pointer");
        return LexcovStatus::NullArgument;
    }
    *out = to_c_string(s);
    LexcovStatus::Ok
}

/// Writes the follow relation as text.
///
/// # Safety
/// `lex` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lexcov_follow(
    lex: *const LexcovLexicon,
    out: *mut *mut c_char,
) -> LexcovStatus {
    guard(|| {
        clear_error();
        let lexicon = match with_lexicon(lex) {
            Ok(l) => l,
            Err(s) => return s,
        };
        write_out(out, lexicon.follow.to_string())
    })
}

/// Writes an automaton in Graphviz syntax: the per-entry pruned automaton
/// when `entry` is non-NULL, otherwise the global automaton when `global` is
/// non-zero, otherwise the reduced one.
///
/// # Safety
/// `lex` must be a live handle; `entry` NULL or a string; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn lexcov_fsa_dot(
    lex: *const LexcovLexicon,
    entry: *const c_char,
    global: bool,
    out: *mut *mut c_char,
) -> LexcovStatus {
    guard(|| {
        clear_error();
        let lexicon = match with_lexicon(lex) {
            Ok(l) => l,
            Err(s) => return s,
        };
        let aut = if entry.is_null() {
            if global {
                &lexicon.global_fsa
            } else {
                &lexicon.reduced_fsa
            }
        } else {
            let name = match read_str(entry) {
                Ok(n) => n,
                Err(s) => return s,
            };
            match lexicon.entry_by_name(name) {
                Some(ix) => {
                    &lexicon.classes[lexicon.entries[ix].class_ix]
                        .class
                        .automaton
                }
                None => {
                    set_error(format!("unknown entry `{name}`"));
                    return LexcovStatus::Query;
                }
            }
        };
        write_out(out, aut.to_dot())
    })
}

/// Writes the clause listing (rule, transfer and interaction clauses).
///
/// # Safety
/// `lex` must be a live handle; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn lexcov_clauses(
    lex: *const LexcovLexicon,
    unfolded: bool,
    out: *mut *mut c_char,
) -> LexcovStatus {
    guard(|| {
        clear_error();
        let lexicon = match with_lexicon(lex) {
            Ok(l) => l,
            Err(s) => return s,
        };
        write_out(out, lexicon.render_clauses(unfolded))
    })
}

/// Writes the extended entry (class entry point plus lifted description).
///
/// # Safety
/// `lex` must be a live handle; `entry` a string; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn lexcov_lift(
    lex: *const LexcovLexicon,
    entry: *const c_char,
    out: *mut *mut c_char,
) -> LexcovStatus {
    guard(|| {
        clear_error();
        let lexicon = match with_lexicon(lex) {
            Ok(l) => l,
            Err(s) => return s,
        };
        let name = match read_str(entry) {
            Ok(n) => n,
            Err(s) => return s,
        };
        match lexicon.entry_by_name(name) {
            Some(ix) => write_out(out, lexicon.render_entry(ix)),
            None => {
                set_error(format!("unknown entry `{name}`"));
                LexcovStatus::Query
            }
        }
    })
}

fn render_solutions(lexicon: &CompiledLexicon, solutions: &[lexcov::runtime::Solution]) -> String {
    let mut s = String::new();
    for sol in solutions {
        let via = if sol.derivation.is_empty() {
            "(none)".to_string()
        } else {
            sol.derivation
                .iter()
                .map(|r| r.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        s.push_str(&format!(
            "{} % via {}\n",
            sol.entry.render(&lexicon.signature),
            via
        ));
    }
    s
}

/// Enumerates the derivable entries of `entry`, one AVM per line.
///
/// # Safety
/// `lex` must be a live handle; `entry` a string; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn lexcov_derive(
    lex: *const LexcovLexicon,
    entry: *const c_char,
    max_depth: u32,
    out: *mut *mut c_char,
) -> LexcovStatus {
    guard(|| {
        clear_error();
        let lexicon = match with_lexicon(lex) {
            Ok(l) => l,
            Err(s) => return s,
        };
        let name = match read_str(entry) {
            Ok(n) => n,
            Err(s) => return s,
        };
        match lexicon.derive_all(name, max_depth as usize) {
            Ok(run) => write_out(out, render_solutions(lexicon, &run.solutions)),
            Err(e) => {
                set_error(e.to_string());
                LexcovStatus::Query
            }
        }
    })
}

/// Looks a query AVM up across the lexicon; one `entry : AVM` line per
/// solution.
///
/// # Safety
/// `lex` must be a live handle; `query_avm` a string; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn lexcov_lookup(
    lex: *const LexcovLexicon,
    query_avm: *const c_char,
    max_depth: u32,
    out: *mut *mut c_char,
) -> LexcovStatus {
    guard(|| {
        clear_error();
        let lexicon = match with_lexicon(lex) {
            Ok(l) => l,
            Err(s) => return s,
        };
        let text = match read_str(query_avm) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let query = match grammar::parse_avm_text(&lexicon.signature, text) {
            Ok(q) => q,
            Err(e) => {
                set_error(format!("bad query: {e}"));
                return LexcovStatus::Query;
            }
        };
        let result = lexicon.lookup(&query, max_depth as usize);
        let mut rendered = String::new();
        for hit in &result.hits {
            for sol in &hit.solutions {
                rendered.push_str(&format!(
                    "{} : {}",
                    hit.entry,
                    render_solutions(lexicon, std::slice::from_ref(sol))
                ));
            }
        }
        write_out(out, rendered)
    })
}

/// Writes the full compiled-lexicon artifact.
///
/// # Safety
/// `lex` must be a live handle; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn lexcov_artifact(
    lex: *const LexcovLexicon,
    out: *mut *mut c_char,
) -> LexcovStatus {
    guard(|| {
        clear_error();
        let lexicon = match with_lexicon(lex) {
            Ok(l) => l,
            Err(s) => return s,
        };
        write_out(out, lexicon.render_artifact())
    })
}
