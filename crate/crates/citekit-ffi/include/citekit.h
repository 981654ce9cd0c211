#ifndef CITEKIT_H
#define CITEKIT_H

/* Generated by cbindgen from citekit-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by fallible functions.
typedef enum CkStatus {
  CkStatus_Ok = 0,
  CkStatus_NullArgument = 1,
  CkStatus_InvalidUtf8 = 2,
  CkStatus_Io = 3,
  CkStatus_Parse = 4,
  CkStatus_Contract = 5,
  CkStatus_NotFound = 6,
  CkStatus_Internal = 7,
} CkStatus;

// Tokenizer selection for trie construction.
typedef enum CkTokenizer {
  CkTokenizer_Whitespace = 0,
  CkTokenizer_Char = 1,
} CkTokenizer;

typedef struct CkIndex CkIndex;

typedef struct CkRegistry CkRegistry;

typedef struct CkTrie CkTrie;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version string; static, do not free.
const char *ck_version(void);

// Message for the most recent failure on this thread, or NULL. Caller frees
// with `ck_string_free`.
char *ck_last_error_message(void);

// Frees any string returned by this library.
//
// # Safety
// `s` must be NULL or a string pointer previously returned by a `ck_`
// function, not yet freed.
void ck_string_free(char *s);

// Loads a title registry from its line-delimited file (with or without an
// artifact header line). Returns NULL on failure.
//
// # Safety
// `path` must be a valid NUL-terminated string.
struct CkRegistry *ck_registry_load(const char *path);

// # Safety
// `reg` must be NULL or an unfreed registry handle.
void ck_registry_free(struct CkRegistry *reg);

// Number of titles, or 0 for NULL.
//
// # Safety
// `reg` must be NULL or a live registry handle.
size_t ck_registry_len(const struct CkRegistry *reg);

// 1 if the title is registered, 0 if not, negative status on error.
//
// # Safety
// `reg` must be a live registry handle; `title` a valid string.
int32_t ck_registry_contains(const struct CkRegistry *reg, const char *title);

// Doc key registered for a title, or NULL when absent. Caller frees.
//
// # Safety
// `reg` must be a live registry handle; `title` a valid string.
char *ck_registry_doc_key(const struct CkRegistry *reg, const char *title);

// Builds the constrained-decoding trie over all registry titles.
//
// # Safety
// `reg` must be a live registry handle.
struct CkTrie *ck_trie_build(const struct CkRegistry *reg, enum CkTokenizer tokenizer);

// Loads a trie from its binary container file. The tokenizer must match the
// one the trie was built with.
//
// # Safety
// `path` must be a valid NUL-terminated string.
struct CkTrie *ck_trie_load(const char *path, enum CkTokenizer tokenizer);

// Saves a trie to the versioned binary container format.
//
// # Safety
// `trie` must be a live trie handle; `path` a valid string.
enum CkStatus ck_trie_save(const struct CkTrie *trie, const char *path);

// # Safety
// `trie` must be NULL or an unfreed trie handle.
void ck_trie_free(struct CkTrie *trie);

// Decoding mask for a prefix: tokenizes `prefix_text` with the trie's
// tokenizer and returns `{"tokens": […], "may_terminate": bool,
// "decodes_to": string|null}` as JSON. An empty prefix yields the root
// continuations. Caller frees.
//
// # Safety
// `trie` must be a live trie handle; `prefix_text` a valid string.
char *ck_trie_allowed_json(const struct CkTrie *trie, const char *prefix_text);

// Number of titles in the trie.
//
// # Safety
// `trie` must be NULL or a live trie handle.
size_t ck_trie_title_count(const struct CkTrie *trie);

// Parses a marked answer into `{"statements": [{"text", "citations"}…]}`
// JSON. NULL with a parse error (and byte offset in the message) on
// unbalanced markers. Caller frees.
//
// # Safety
// All three arguments must be valid NUL-terminated strings.
char *ck_parse_citations_json(const char *answer,
                              const char *marker_open,
                              const char *marker_close);

// Short-form citation metrics of a marked answer against a gold title.
// Writes precision and recall through the out pointers.
//
// # Safety
// String arguments must be valid; `out_precision`/`out_recall` must be
// writable or NULL.
enum CkStatus ck_shortform_metrics(const char *answer,
                                   const char *gold_title,
                                   const char *marker_open,
                                   const char *marker_close,
                                   double *out_precision,
                                   double *out_recall);

// Exact-match recall: fraction of `golds_json` (a JSON array of strings)
// appearing as case-sensitive substrings of the answer. Negative on error.
//
// # Safety
// Both arguments must be valid NUL-terminated strings.
double ck_em_recall(const char *answer, const char *golds_json);

// Loads a BM25 index from its binary container file.
//
// # Safety
// `path` must be a valid NUL-terminated string.
struct CkIndex *ck_index_load(const char *path);

// # Safety
// `index` must be NULL or an unfreed index handle.
void ck_index_free(struct CkIndex *index);

// Top-k retrieval as a JSON array of
// `{"doc_key", "chunk_index", "score"}`, descending. Caller frees.
//
// # Safety
// `index` must be a live index handle; `query` a valid string.
char *ck_index_retrieve_json(const struct CkIndex *index, const char *query, size_t k);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CITEKIT_H */
