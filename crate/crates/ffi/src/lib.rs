//! C interface to `pcfgen`.
//!
//! Grammars are opaque handles owned by the caller and released with
//! [`pcfg_grammar_free`]. Strings returned through out-parameters are
//! NUL-terminated UTF-8 owned by the caller and released with
//! [`pcfg_string_free`]. Every fallible function returns a [`PcfgStatus`];
//! on failure [`pcfg_last_error`] describes what went wrong on the calling
//! thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pcfgen::generator::{stream_rng, GenerateError, Generator};
use pcfgen::learner::{learn, LearnError, Sample, UnparsablePolicy};
use pcfgen::{
    invert, parse_grammar, parse_input, serialize_grammar, serialize_tree, tree_to_json, Grammar,
};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcfgStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8 or contained an interior NUL.
    InvalidUtf8 = 2,
    /// The grammar text or structure is invalid.
    GrammarError = 3,
    /// An input did not parse under the grammar.
    ParseError = 4,
    /// The grammar lacks the probabilities the operation needs.
    NotNormalized = 5,
    /// A numeric argument is out of range.
    InvalidArgument = 6,
    /// An unexpected internal failure.
    Internal = 7,
}

/// A parsed grammar.
pub struct PcfgGrammar {
    inner: Grammar,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let message = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(message).ok());
}

type Outcome<T> = Result<T, (PcfgStatus, String)>;

fn run(f: impl FnOnce() -> Outcome<()>) -> PcfgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            PcfgStatus::Ok
        }
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PcfgStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Outcome<&'a str> {
    if p.is_null() {
        return Err((PcfgStatus::NullArgument, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| (PcfgStatus::InvalidUtf8, format!("`{name}`: {e}")))
}

unsafe fn grammar_arg<'a>(g: *const PcfgGrammar) -> Outcome<&'a Grammar> {
    g.as_ref()
        .map(|g| &g.inner)
        .ok_or((PcfgStatus::NullArgument, "`grammar` is null".into()))
}

fn check_out<T>(out: *mut T) -> Outcome<()> {
    if out.is_null() {
        Err((PcfgStatus::NullArgument, "output pointer is null".into()))
    } else {
        Ok(())
    }
}

fn into_c_string(s: String) -> Outcome<*mut c_char> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|e| (PcfgStatus::InvalidUtf8, e.to_string()))
}

fn boxed(g: Grammar) -> *mut PcfgGrammar {
    Box::into_raw(Box::new(PcfgGrammar { inner: g }))
}

fn learn_error(e: LearnError) -> (PcfgStatus, String) {
    let status = match e {
        LearnError::Unparsable { .. } => PcfgStatus::ParseError,
        _ => PcfgStatus::GrammarError,
    };
    (status, e.to_string())
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn pcfg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn pcfg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses grammar text into a new handle.
///
/// # Safety
/// `text` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pcfg_grammar_parse(
    text: *const c_char,
    out: *mut *mut PcfgGrammar,
) -> PcfgStatus {
    run(|| {
        check_out(out)?;
        let text = str_arg(text, "text")?;
        let g = parse_grammar(text).map_err(|e| (PcfgStatus::GrammarError, e.to_string()))?;
        g.check()
            .map_err(|e| (PcfgStatus::GrammarError, e.to_string()))?;
        *out = boxed(g);
        Ok(())
    })
}

/// Releases a grammar handle. Null is ignored.
///
/// # Safety
/// `grammar` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pcfg_grammar_free(grammar: *mut PcfgGrammar) {
    if !grammar.is_null() {
        drop(Box::from_raw(grammar));
    }
}

/// Writes the grammar in the text format read by [`pcfg_grammar_parse`].
///
/// # Safety
/// `grammar` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pcfg_grammar_serialize(
    grammar: *const PcfgGrammar,
    out: *mut *mut c_char,
) -> PcfgStatus {
    run(|| {
        check_out(out)?;
        let g = grammar_arg(grammar)?;
        *out = into_c_string(serialize_grammar(g))?;
        Ok(())
    })
}

/// Learns probabilities from `count` sample strings. With
/// `skip_unparsable`, samples that do not parse are left out instead of
/// failing the call.
///
/// # Safety
/// `samples` must point to `count` valid NUL-terminated strings (it may be
/// null when `count` is 0); `grammar` must be a live handle and `out` a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn pcfg_learn(
    grammar: *const PcfgGrammar,
    samples: *const *const c_char,
    count: usize,
    skip_unparsable: bool,
    out: *mut *mut PcfgGrammar,
) -> PcfgStatus {
    run(|| {
        check_out(out)?;
        let g = grammar_arg(grammar)?;
        if samples.is_null() && count > 0 {
            return Err((PcfgStatus::NullArgument, "`samples` is null".into()));
        }
        let corpus = (0..count)
            .map(|i| {
                let text = str_arg(*samples.add(i), "samples[i]")?;
                Ok(Sample::new(format!("sample {i}"), text))
            })
            .collect::<Outcome<Vec<_>>>()?;
        let policy = if skip_unparsable {
            UnparsablePolicy::Skip
        } else {
            UnparsablePolicy::Abort
        };
        let learned = learn(g, &corpus, policy).map_err(learn_error)?;
        *out = boxed(learned.grammar);
        Ok(())
    })
}

/// Inverts the probabilities of a normalized grammar.
///
/// # Safety
/// `grammar` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pcfg_invert(
    grammar: *const PcfgGrammar,
    out: *mut *mut PcfgGrammar,
) -> PcfgStatus {
    run(|| {
        check_out(out)?;
        let g = grammar_arg(grammar)?;
        let inverted = invert(g).map_err(|e| (PcfgStatus::NotNormalized, e.to_string()))?;
        *out = boxed(inverted);
        Ok(())
    })
}

/// Generates input number `index` of the suite seeded with `seed`. The
/// result equals the file `index` written by `pcfgen generate` with the same
/// grammar, seed and `max_expansions`.
///
/// # Safety
/// `grammar` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pcfg_generate(
    grammar: *const PcfgGrammar,
    max_expansions: usize,
    seed: u64,
    index: u64,
    out: *mut *mut c_char,
) -> PcfgStatus {
    run(|| {
        check_out(out)?;
        let g = grammar_arg(grammar)?;
        if max_expansions == 0 {
            return Err((
                PcfgStatus::InvalidArgument,
                "max_expansions must be at least 1".into(),
            ));
        }
        let generator = Generator::new(g).map_err(|e| match e {
            GenerateError::Unnormalized(_) => (PcfgStatus::NotNormalized, e.to_string()),
            _ => (PcfgStatus::GrammarError, e.to_string()),
        })?;
        let tree = generator
            .generate_tree(max_expansions, &mut stream_rng(seed, index))
            .tree;
        let text = serialize_tree(&tree, g).map_err(|e| (PcfgStatus::Internal, e.to_string()))?;
        *out = into_c_string(text)?;
        Ok(())
    })
}

/// Parses `input` and returns its derivation tree as JSON.
///
/// # Safety
/// `grammar` must be a live handle, `input` a valid NUL-terminated string and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pcfg_parse_json(
    grammar: *const PcfgGrammar,
    input: *const c_char,
    out: *mut *mut c_char,
) -> PcfgStatus {
    run(|| {
        check_out(out)?;
        let g = grammar_arg(grammar)?;
        let input = str_arg(input, "input")?;
        let outcome = parse_input(g, input).map_err(|e| (PcfgStatus::ParseError, e.to_string()))?;
        *out = into_c_string(tree_to_json(&outcome.tree))?;
        Ok(())
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pcfg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
