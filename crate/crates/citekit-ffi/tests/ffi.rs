//! Exercises the C ABI the way a foreign caller would: through raw pointers
//! and NUL-terminated strings.

use citekit_ffi::*;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

unsafe fn take_string(ptr: *mut c_char) -> String {
    assert!(!ptr.is_null());
    let s = CStr::from_ptr(ptr).to_str().unwrap().to_owned();
    ck_string_free(ptr);
    s
}

fn write_registry_file(dir: &std::path::Path) -> CString {
    let path = dir.join("registry.jsonl");
    let body = concat!(
        "{\"title\":\"Alpine Weather Atlas\",\"doc_key\":\"d0\"}\n",
        "{\"title\":\"Harbor Town Records\",\"doc_key\":\"d1\"}\n",
        "{\"title\":\"Harbor Town\",\"doc_key\":\"d2\"}\n",
        "{\"section\":\"rename_log\"}\n",
    );
    std::fs::write(&path, body).unwrap();
    c(path.to_str().unwrap())
}

#[test]
fn registry_load_query_free() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_registry_file(dir.path());
    unsafe {
        let reg = ck_registry_load(path.as_ptr());
        assert!(!reg.is_null());
        assert_eq!(ck_registry_len(reg), 3);
        assert_eq!(ck_registry_contains(reg, c("Harbor Town Records").as_ptr()), 1);
        assert_eq!(ck_registry_contains(reg, c("Nope").as_ptr()), 0);
        let key = take_string(ck_registry_doc_key(reg, c("Alpine Weather Atlas").as_ptr()));
        assert_eq!(key, "d0");
        ck_registry_free(reg);
    }
}

#[test]
fn missing_file_reports_error() {
    unsafe {
        let reg = ck_registry_load(c("/definitely/not/here.jsonl").as_ptr());
        assert!(reg.is_null());
        let message = take_string(ck_last_error_message());
        assert!(message.contains("i/o error"), "got: {message}");
    }
}

#[test]
fn null_arguments_are_rejected() {
    unsafe {
        assert!(ck_registry_load(std::ptr::null()).is_null());
        assert_eq!(
            ck_registry_contains(std::ptr::null(), c("x").as_ptr()),
            -(CkStatus::NullArgument as i32)
        );
        assert_eq!(ck_registry_len(std::ptr::null()), 0);
        ck_registry_free(std::ptr::null_mut()); // must be a no-op
        ck_string_free(std::ptr::null_mut());
    }
}

#[test]
fn trie_masks_through_the_abi() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_registry_file(dir.path());
    unsafe {
        let reg = ck_registry_load(path.as_ptr());
        let trie = ck_trie_build(reg, CkTokenizer::Whitespace);
        assert!(!trie.is_null());
        assert_eq!(ck_trie_title_count(trie), 3);

        let root = take_string(ck_trie_allowed_json(trie, c("").as_ptr()));
        let root: serde_json::Value = serde_json::from_str(&root).unwrap();
        assert_eq!(root["may_terminate"], false);
        let tokens: Vec<&str> = root["tokens"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
        assert_eq!(tokens, vec!["Alpine", "Harbor"]);

        // "Harbor Town" is itself a title and a strict prefix of another
        let harbor = take_string(ck_trie_allowed_json(trie, c("Harbor Town").as_ptr()));
        let harbor: serde_json::Value = serde_json::from_str(&harbor).unwrap();
        assert_eq!(harbor["may_terminate"], true);
        assert_eq!(harbor["decodes_to"], "Harbor Town");
        assert_eq!(harbor["tokens"].as_array().unwrap().len(), 1);

        // save + reload round trip
        let trie_path = c(dir.path().join("trie.bin").to_str().unwrap());
        assert_eq!(ck_trie_save(trie, trie_path.as_ptr()), CkStatus::Ok);
        let reloaded = ck_trie_load(trie_path.as_ptr(), CkTokenizer::Whitespace);
        assert!(!reloaded.is_null());
        assert_eq!(ck_trie_title_count(reloaded), 3);
        ck_trie_free(reloaded);

        ck_trie_free(trie);
        ck_registry_free(reg);
    }
}

#[test]
fn citation_parsing_and_metrics() {
    unsafe {
        let json = take_string(ck_parse_citations_json(
            c("fact one <|T1|> fact two <|T2|><|T3|>").as_ptr(),
            c("<|").as_ptr(),
            c("|>").as_ptr(),
        ));
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        let statements = parsed["statements"].as_array().unwrap();
        assert_eq!(statements.len(), 2);
        assert_eq!(statements[1]["citations"].as_array().unwrap().len(), 2);

        // unbalanced markers → NULL + parse error naming the offset
        let bad = ck_parse_citations_json(c("broken <|tail").as_ptr(), c("<|").as_ptr(), c("|>").as_ptr());
        assert!(bad.is_null());
        let message = take_string(ck_last_error_message());
        assert!(message.contains("byte 7"), "got: {message}");

        let mut precision = -1.0f64;
        let mut recall = -1.0f64;
        let status = ck_shortform_metrics(
            c("answer <|Gold|><|Other|>").as_ptr(),
            c("Gold").as_ptr(),
            c("<|").as_ptr(),
            c("|>").as_ptr(),
            &mut precision,
            &mut recall,
        );
        assert_eq!(status, CkStatus::Ok);
        assert_eq!(precision, 0.5);
        assert_eq!(recall, 1.0);

        let r = ck_em_recall(c("Paris and Lyon").as_ptr(), c("[\"Paris\",\"Nice\"]").as_ptr());
        assert_eq!(r, 0.5);
        let bad = ck_em_recall(c("x").as_ptr(), c("not json").as_ptr());
        assert_eq!(bad, -1.0);
    }
}

#[test]
fn index_retrieval_through_the_abi() {
    use citekit::bm25::{build_index, Bm25Params};
    use citekit::corpus::Chunk;

    let dir = tempfile::tempdir().unwrap();
    let chunks = vec![
        Chunk {
            doc_key: "a".into(),
            chunk_index: 0,
            words: vec!["harbor".into(), "lantern".into()],
            char_span: (0, 0),
        },
        Chunk {
            doc_key: "b".into(),
            chunk_index: 0,
            words: vec!["granite".into(), "basin".into()],
            char_span: (0, 0),
        },
    ];
    let index = build_index(&chunks, Bm25Params::default()).unwrap();
    let path = dir.path().join("index.bin");
    index.save(&path, 0, [0u8; 32]).unwrap();

    unsafe {
        let handle = ck_index_load(c(path.to_str().unwrap()).as_ptr());
        assert!(!handle.is_null());
        let json = take_string(ck_index_retrieve_json(handle, c("granite").as_ptr(), 5));
        let rows: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(rows.as_array().unwrap().len(), 1);
        assert_eq!(rows[0]["doc_key"], "b");
        ck_index_free(handle);
    }
}

#[test]
fn version_is_static() {
    unsafe {
        let v = CStr::from_ptr(ck_version()).to_str().unwrap();
        assert!(!v.is_empty());
    }
}
