//! C ABI for embedding the toolkit in other languages.
//!
//! Conventions:
//! - Opaque handles (`CkRegistry`, `CkTrie`, `CkIndex`) are created and freed
//!   by paired `_load`/`_build` and `_free` functions. Passing a handle after
//!   freeing it is undefined behavior, as in any C API.
//! - Functions returning pointers return NULL on failure; functions
//!   returning `CkStatus` return a nonzero code. Either way
//!   `ck_last_error_message` yields a human-readable description for the
//!   calling thread (free it with `ck_string_free`).
//! - Strings are NUL-terminated UTF-8. List-shaped results come back as
//!   JSON strings to keep the surface small; free them with
//!   `ck_string_free`.

use citekit::cite::parse_citations;
use citekit::corpus::{read_registry, TitleRegistry};
use citekit::error::Error;
use citekit::text::MarkerFormat;
use citekit::token::{Tokenizer, TokenizerKind};
use citekit::trie::{build_title_trie, TitleTrie};
use libc::c_char;
use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::io::Cursor;
use std::path::Path;
use std::sync::Arc;

/// Status codes returned by fallible functions.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CkStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Contract = 5,
    NotFound = 6,
    Internal = 7,
}

/// Tokenizer selection for trie construction.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CkTokenizer {
    Whitespace = 0,
    Char = 1,
}

pub struct CkRegistry {
    inner: TitleRegistry,
}

pub struct CkTrie {
    trie: TitleTrie,
    tokenizer: Arc<dyn Tokenizer>,
}

pub struct CkIndex {
    inner: citekit::bm25::InvertedIndex,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', "?");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).ok();
    });
}

fn status_of(err: &Error) -> CkStatus {
    match err {
        Error::Io(_) => CkStatus::Io,
        Error::Parse { .. } => CkStatus::Parse,
        Error::Contract(_) | Error::Config(_) => CkStatus::Contract,
        Error::Container(_) | Error::Json(_) => CkStatus::Parse,
        _ => CkStatus::Internal,
    }
}

/// # Safety
/// `ptr` must be NULL or a valid NUL-terminated string.
unsafe fn utf8_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, CkStatus> {
    if ptr.is_null() {
        set_error(&format!("argument `{name}` is NULL"));
        return Err(CkStatus::NullArgument);
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(s),
        Err(_) => {
            set_error(&format!("argument `{name}` is not valid UTF-8"));
            Err(CkStatus::InvalidUtf8)
        }
    }
}

fn into_c_string(s: String) -> *mut c_char {
    match CString::new(s.replace('\0', "?")) {
        Ok(c) => c.into_raw(),
        Err(_) => std::ptr::null_mut(),
    }
}

fn tokenizer_of(kind: CkTokenizer) -> Arc<dyn Tokenizer> {
    match kind {
        CkTokenizer::Whitespace => TokenizerKind::Whitespace.build(),
        CkTokenizer::Char => TokenizerKind::Char.build(),
    }
}

/// Library version string; static, do not free.
#[no_mangle]
pub extern "C" fn ck_version() -> *const c_char {
    static VERSION: &[u8] = concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes();
    VERSION.as_ptr() as *const c_char
}

/// Message for the most recent failure on this thread, or NULL. Caller frees
/// with `ck_string_free`.
#[no_mangle]
pub extern "C" fn ck_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| match slot.borrow().as_ref() {
        Some(message) => message.clone().into_raw(),
        None => std::ptr::null_mut(),
    })
}

/// Frees any string returned by this library.
///
/// # Safety
/// `s` must be NULL or a string pointer previously returned by a `ck_`
/// function, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ck_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

fn load_registry_file(path: &str) -> Result<TitleRegistry, Error> {
    let text = std::fs::read_to_string(Path::new(path))?;
    // tolerate an artifact header on the first line
    let body = match text.split_once('\n') {
        Some((first, rest)) if first.contains("\"artifact\"") => rest,
        _ => text.as_str(),
    };
    read_registry(Cursor::new(body))
}

/// Loads a title registry from its line-delimited file (with or without an
/// artifact header line). Returns NULL on failure.
///
/// # Safety
/// `path` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ck_registry_load(path: *const c_char) -> *mut CkRegistry {
    let Ok(path) = utf8_arg(path, "path") else {
        return std::ptr::null_mut();
    };
    match load_registry_file(path) {
        Ok(inner) => Box::into_raw(Box::new(CkRegistry { inner })),
        Err(e) => {
            set_error(&e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// # Safety
/// `reg` must be NULL or an unfreed registry handle.
#[no_mangle]
pub unsafe extern "C" fn ck_registry_free(reg: *mut CkRegistry) {
    if !reg.is_null() {
        drop(Box::from_raw(reg));
    }
}

/// Number of titles, or 0 for NULL.
///
/// # Safety
/// `reg` must be NULL or a live registry handle.
#[no_mangle]
pub unsafe extern "C" fn ck_registry_len(reg: *const CkRegistry) -> usize {
    if reg.is_null() {
        return 0;
    }
    (*reg).inner.len()
}

/// 1 if the title is registered, 0 if not, negative status on error.
///
/// # Safety
/// `reg` must be a live registry handle; `title` a valid string.
#[no_mangle]
pub unsafe extern "C" fn ck_registry_contains(reg: *const CkRegistry, title: *const c_char) -> i32 {
    if reg.is_null() {
        set_error("argument `reg` is NULL");
        return -(CkStatus::NullArgument as i32);
    }
    let Ok(title) = utf8_arg(title, "title") else {
        return -(CkStatus::InvalidUtf8 as i32);
    };
    i32::from((*reg).inner.contains_title(title))
}

/// Doc key registered for a title, or NULL when absent. Caller frees.
///
/// # Safety
/// `reg` must be a live registry handle; `title` a valid string.
#[no_mangle]
pub unsafe extern "C" fn ck_registry_doc_key(
    reg: *const CkRegistry,
    title: *const c_char,
) -> *mut c_char {
    if reg.is_null() {
        set_error("argument `reg` is NULL");
        return std::ptr::null_mut();
    }
    let Ok(title) = utf8_arg(title, "title") else {
        return std::ptr::null_mut();
    };
    match (*reg).inner.doc_key_of(title) {
        Some(key) => into_c_string(key.to_owned()),
        None => {
            set_error(&format!("title {title:?} not in registry"));
            std::ptr::null_mut()
        }
    }
}

/// Builds the constrained-decoding trie over all registry titles.
///
/// # Safety
/// `reg` must be a live registry handle.
#[no_mangle]
pub unsafe extern "C" fn ck_trie_build(reg: *const CkRegistry, tokenizer: CkTokenizer) -> *mut CkTrie {
    if reg.is_null() {
        set_error("argument `reg` is NULL");
        return std::ptr::null_mut();
    }
    let tok = tokenizer_of(tokenizer);
    match build_title_trie(&(*reg).inner, tok.as_ref()) {
        Ok(trie) => Box::into_raw(Box::new(CkTrie { trie, tokenizer: tok })),
        Err(e) => {
            set_error(&e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Loads a trie from its binary container file. The tokenizer must match the
/// one the trie was built with.
///
/// # Safety
/// `path` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ck_trie_load(path: *const c_char, tokenizer: CkTokenizer) -> *mut CkTrie {
    let Ok(path) = utf8_arg(path, "path") else {
        return std::ptr::null_mut();
    };
    match TitleTrie::load(Path::new(path)) {
        Ok(trie) => Box::into_raw(Box::new(CkTrie {
            trie,
            tokenizer: tokenizer_of(tokenizer),
        })),
        Err(e) => {
            set_error(&e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Saves a trie to the versioned binary container format.
///
/// # Safety
/// `trie` must be a live trie handle; `path` a valid string.
#[no_mangle]
pub unsafe extern "C" fn ck_trie_save(trie: *const CkTrie, path: *const c_char) -> CkStatus {
    if trie.is_null() {
        set_error("argument `trie` is NULL");
        return CkStatus::NullArgument;
    }
    let path = match utf8_arg(path, "path") {
        Ok(p) => p,
        Err(status) => return status,
    };
    match (*trie).trie.save(Path::new(path), 0, [0u8; 32]) {
        Ok(()) => CkStatus::Ok,
        Err(e) => {
            set_error(&e.to_string());
            status_of(&e)
        }
    }
}

/// # Safety
/// `trie` must be NULL or an unfreed trie handle.
#[no_mangle]
pub unsafe extern "C" fn ck_trie_free(trie: *mut CkTrie) {
    if !trie.is_null() {
        drop(Box::from_raw(trie));
    }
}

/// Decoding mask for a prefix: tokenizes `prefix_text` with the trie's
/// tokenizer and returns `{"tokens": […], "may_terminate": bool,
/// "decodes_to": string|null}` as JSON. An empty prefix yields the root
/// continuations. Caller frees.
///
/// # Safety
/// `trie` must be a live trie handle; `prefix_text` a valid string.
#[no_mangle]
pub unsafe extern "C" fn ck_trie_allowed_json(
    trie: *const CkTrie,
    prefix_text: *const c_char,
) -> *mut c_char {
    if trie.is_null() {
        set_error("argument `trie` is NULL");
        return std::ptr::null_mut();
    }
    let Ok(prefix) = utf8_arg(prefix_text, "prefix_text") else {
        return std::ptr::null_mut();
    };
    let handle = &*trie;
    let tokens = handle.tokenizer.tokenize(prefix);
    let (next, may_terminate) = handle.trie.allowed_continuations(&tokens);
    let decodes_to = handle.trie.decode(&tokens);
    let json = serde_json::json!({
        "tokens": next,
        "may_terminate": may_terminate,
        "decodes_to": decodes_to,
    });
    into_c_string(json.to_string())
}

/// Number of titles in the trie.
///
/// # Safety
/// `trie` must be NULL or a live trie handle.
#[no_mangle]
pub unsafe extern "C" fn ck_trie_title_count(trie: *const CkTrie) -> usize {
    if trie.is_null() {
        return 0;
    }
    (*trie).trie.title_count()
}

/// Parses a marked answer into `{"statements": [{"text", "citations"}…]}`
/// JSON. NULL with a parse error (and byte offset in the message) on
/// unbalanced markers. Caller frees.
///
/// # Safety
/// All three arguments must be valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn ck_parse_citations_json(
    answer: *const c_char,
    marker_open: *const c_char,
    marker_close: *const c_char,
) -> *mut c_char {
    let Ok(answer) = utf8_arg(answer, "answer") else {
        return std::ptr::null_mut();
    };
    let Ok(open) = utf8_arg(marker_open, "marker_open") else {
        return std::ptr::null_mut();
    };
    let Ok(close) = utf8_arg(marker_close, "marker_close") else {
        return std::ptr::null_mut();
    };
    match parse_citations(answer, &MarkerFormat::new(open, close)) {
        Ok(parsed) => match serde_json::to_string(&parsed) {
            Ok(json) => into_c_string(json),
            Err(e) => {
                set_error(&e.to_string());
                std::ptr::null_mut()
            }
        },
        Err(e) => {
            set_error(&e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Short-form citation metrics of a marked answer against a gold title.
/// Writes precision and recall through the out pointers.
///
/// # Safety
/// String arguments must be valid; `out_precision`/`out_recall` must be
/// writable or NULL.
#[no_mangle]
pub unsafe extern "C" fn ck_shortform_metrics(
    answer: *const c_char,
    gold_title: *const c_char,
    marker_open: *const c_char,
    marker_close: *const c_char,
    out_precision: *mut f64,
    out_recall: *mut f64,
) -> CkStatus {
    let answer = match utf8_arg(answer, "answer") {
        Ok(s) => s,
        Err(status) => return status,
    };
    let gold = match utf8_arg(gold_title, "gold_title") {
        Ok(s) => s,
        Err(status) => return status,
    };
    let open = match utf8_arg(marker_open, "marker_open") {
        Ok(s) => s,
        Err(status) => return status,
    };
    let close = match utf8_arg(marker_close, "marker_close") {
        Ok(s) => s,
        Err(status) => return status,
    };
    match parse_citations(answer, &MarkerFormat::new(open, close)) {
        Ok(parsed) => {
            let (precision, recall) = citekit::eval::shortform_citation_metrics(&parsed, gold);
            if !out_precision.is_null() {
                *out_precision = precision;
            }
            if !out_recall.is_null() {
                *out_recall = recall;
            }
            CkStatus::Ok
        }
        Err(e) => {
            set_error(&e.to_string());
            status_of(&e)
        }
    }
}

/// Exact-match recall: fraction of `golds_json` (a JSON array of strings)
/// appearing as case-sensitive substrings of the answer. Negative on error.
///
/// # Safety
/// Both arguments must be valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn ck_em_recall(answer: *const c_char, golds_json: *const c_char) -> f64 {
    let Ok(answer) = utf8_arg(answer, "answer") else {
        return -1.0;
    };
    let Ok(golds) = utf8_arg(golds_json, "golds_json") else {
        return -1.0;
    };
    match serde_json::from_str::<Vec<String>>(golds) {
        Ok(golds) => citekit::eval::em_recall(answer, &golds),
        Err(e) => {
            set_error(&format!("golds_json is not a JSON string array: {e}"));
            -1.0
        }
    }
}

/// Loads a BM25 index from its binary container file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ck_index_load(path: *const c_char) -> *mut CkIndex {
    let Ok(path) = utf8_arg(path, "path") else {
        return std::ptr::null_mut();
    };
    match citekit::bm25::InvertedIndex::load(Path::new(path)) {
        Ok(inner) => Box::into_raw(Box::new(CkIndex { inner })),
        Err(e) => {
            set_error(&e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// # Safety
/// `index` must be NULL or an unfreed index handle.
#[no_mangle]
pub unsafe extern "C" fn ck_index_free(index: *mut CkIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// Top-k retrieval as a JSON array of
/// `{"doc_key", "chunk_index", "score"}`, descending. Caller frees.
///
/// # Safety
/// `index` must be a live index handle; `query` a valid string.
#[no_mangle]
pub unsafe extern "C" fn ck_index_retrieve_json(
    index: *const CkIndex,
    query: *const c_char,
    k: usize,
) -> *mut c_char {
    if index.is_null() {
        set_error("argument `index` is NULL");
        return std::ptr::null_mut();
    }
    let Ok(query) = utf8_arg(query, "query") else {
        return std::ptr::null_mut();
    };
    let handle = &(*index).inner;
    match handle.retrieve(query, k.max(1)) {
        Ok(hits) => {
            let rows: Vec<serde_json::Value> = hits
                .into_iter()
                .map(|(chunk, score)| {
                    let (doc_key, chunk_index) = handle.key(chunk);
                    serde_json::json!({
                        "doc_key": doc_key,
                        "chunk_index": chunk_index,
                        "score": score,
                    })
                })
                .collect();
            into_c_string(serde_json::Value::Array(rows).to_string())
        }
        Err(e) => {
            set_error(&e.to_string());
            std::ptr::null_mut()
        }
    }
}
