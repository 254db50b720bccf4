#ifndef CAPEKG_H
#define CAPEKG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CapeLayer {
  CAPE_LAYER_BASE = 0,
  CAPE_LAYER_OVERLAY = 1,
} CapeLayer;

typedef enum CapeStatus {
  CAPE_STATUS_OK = 0,
  CAPE_STATUS_NULL_ARGUMENT = 1,
  CAPE_STATUS_INVALID_UTF8 = 2,
  CAPE_STATUS_PARSE = 3,
  CAPE_STATUS_UNKNOWN_CASE = 4,
  CAPE_STATUS_DUPLICATE_CASE = 5,
  CAPE_STATUS_EDIT_REJECTED = 6,
  CAPE_STATUS_NOT_FOUND = 7,
  CAPE_STATUS_BUFFER_TOO_SMALL = 8,
  CAPE_STATUS_IO = 9,
  CAPE_STATUS_ORACLE_UNAVAILABLE = 10,
  CAPE_STATUS_INTERNAL = 11,
  CAPE_STATUS_PANIC = 12,
} CapeStatus;

/**
 * Opaque store handle.
 */
typedef struct CapeStore CapeStore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Builds a store from facts JSONL text (`{"s","r","o"}` per line).
 *
 * # Safety
 * `facts_jsonl` must be a valid C string and `out` a valid pointer.
 */
enum CapeStatus cape_store_from_facts_jsonl(const char *facts_jsonl, struct CapeStore **out);

/**
 * Builds a store from a facts JSONL file.
 *
 * # Safety
 * `path` must be a valid C string and `out` a valid pointer.
 */
enum CapeStatus cape_store_from_facts_file(const char *path, struct CapeStore **out);

/**
 * Releases a store. Null is ignored.
 *
 * # Safety
 * `store` must come from a `cape_store_from_*` call and not be used again.
 */
void cape_store_free(struct CapeStore *store);

/**
 * Creates an empty overlay for `case_id`.
 *
 * # Safety
 * Pointers must be valid; `store` must be a live handle.
 */
enum CapeStatus cape_create_overlay(struct CapeStore *store, const char *case_id);

/**
 * Applies `(s, r) -> o_new` to the case's overlay, creating it if needed.
 *
 * # Safety
 * Pointers must be valid; `store` must be a live handle.
 */
enum CapeStatus cape_apply_edit(struct CapeStore *store,
                                const char *case_id,
                                const char *s,
                                const char *r,
                                const char *o_new);

/**
 * Applies a structured edits JSONL file. `applied` (nullable) receives the
 * number of edits applied before any failure.
 *
 * # Safety
 * Pointers must be valid; `store` must be a live handle.
 */
enum CapeStatus cape_apply_edits_file(struct CapeStore *store, const char *path, size_t *applied);

/**
 * Resolves `(s, r)` under `case_id`, writing the object as a NUL-terminated
 * string into `buf`. `needed` (nullable) receives the object's byte length
 * without the terminator; `provenance` (nullable) the answering layer.
 * Returns `BufferTooSmall` when `buf_len <= *needed`.
 *
 * # Safety
 * Pointers must be valid; `buf` must hold `buf_len` bytes.
 */
enum CapeStatus cape_resolve(const struct CapeStore *store,
                             const char *case_id,
                             const char *s,
                             const char *r,
                             char *buf,
                             size_t buf_len,
                             size_t *needed,
                             enum CapeLayer *provenance);

/**
 * Answers `question` under `case_id` with deterministic mock oracles and
 * returns the answer and hop trace as JSON in `out_json` (free with
 * [`cape_string_free`]). `fixtures_path` (nullable) names a mock fixtures
 * JSONL file supplying decompositions and scripted LLM replies.
 *
 * # Safety
 * Pointers must be valid; `store` must be a live handle.
 */
enum CapeStatus cape_query_json(const struct CapeStore *store,
                                const char *case_id,
                                const char *question,
                                const char *fixtures_path,
                                char **out_json);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used again.
 */
void cape_string_free(char *s);

/**
 * Message for the calling thread's most recent failure, or null. Valid
 * until the next library call on this thread.
 */
const char *cape_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *cape_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CAPEKG_H */
