#ifndef QIDENT_H
#define QIDENT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes of every exported function.
typedef enum QidentStatus {
  QIDENT_STATUS_OK = 0,
  // The identity was evaluated but did not verify.
  QIDENT_STATUS_VERIFICATION_FAILED = 1,
  QIDENT_STATUS_NULL_ARGUMENT = 2,
  QIDENT_STATUS_INVALID_UTF8 = 3,
  QIDENT_STATUS_SYNTAX = 4,
  QIDENT_STATUS_NOT_FOUND = 5,
  QIDENT_STATUS_CATALOG_ERROR = 6,
  QIDENT_STATUS_EVALUATION_ERROR = 7,
  QIDENT_STATUS_SAMPLING_EXHAUSTED = 8,
  QIDENT_STATUS_INVALID_ARGUMENT = 9,
  QIDENT_STATUS_PANIC = 10,
} QidentStatus;

// Opaque handle to a loaded catalog.
typedef struct QidentCatalog QidentCatalog;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. Owned by the
// library and valid until the next failing call on the same thread.
const char *qident_last_error(void);

// Releases a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void qident_string_free(char *s);

// Loads the catalog in `dir`, or the default catalog when `dir` is NULL.
//
// # Safety
// `dir` is NULL or a NUL-terminated string; `out` must be writable.
enum QidentStatus qident_catalog_open(const char *dir, struct QidentCatalog **out);

// Frees a catalog handle. NULL is ignored.
//
// # Safety
// `cat` must come from [`qident_catalog_open`] and not have been freed.
void qident_catalog_free(struct QidentCatalog *cat);

// Number of identities in the catalog; 0 for NULL.
//
// # Safety
// `cat` is NULL or a live handle.
uintptr_t qident_catalog_len(const struct QidentCatalog *cat);

// Id of the identity at `index`, as a new string.
//
// # Safety
// `cat` is a live handle; `out` must be writable.
enum QidentStatus qident_catalog_id(const struct QidentCatalog *cat, uintptr_t index, char **out);

// Verifies identity `id` (or an alias) and writes the JSON report.
//
// Returns [`QidentStatus::VerificationFailed`] with the report still written
// when some trial fails.
//
// # Safety
// `cat` is a live handle, `id` a NUL-terminated string, `out_json` writable.
enum QidentStatus qident_verify_json(const struct QidentCatalog *cat,
                                     const char *id,
                                     uint32_t trials,
                                     uint32_t digits,
                                     uint64_t seed,
                                     char **out_json);

// Evaluates `expr` with `bindings` of the form `"a=0.3+0.1i, q=0.4"` and
// writes the value as `"re,im"`.
//
// # Safety
// `expr` is a NUL-terminated string, `bindings` NULL or one, `out` writable.
enum QidentStatus qident_eval(const char *expr, const char *bindings, uint32_t digits, char **out);

// Library version as a static string.
const char *qident_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QIDENT_H */
