/* SPDX-License-Identifier: Apache-2.0 */

#ifndef CHIPFORGE_H
#define CHIPFORGE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every exported function.
 */
typedef enum CfStatus {
  CF_STATUS_OK = 0,
  CF_STATUS_NULL_POINTER = 1,
  CF_STATUS_INVALID_UTF8 = 2,
  CF_STATUS_INVALID_ARGUMENT = 3,
  /**
   * Argument outside the function's mathematical domain.
   */
  CF_STATUS_DOMAIN = 4,
  CF_STATUS_NOT_FOUND = 5,
  CF_STATUS_IO = 6,
  /**
   * Malformed JSON or a description that fails schema checks.
   */
  CF_STATUS_SCHEMA = 7,
  CF_STATUS_PANIC = 99,
} CfStatus;

/**
 * Opaque code-library handle.
 */
typedef struct CfLibrary CfLibrary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *cf_last_error(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void cf_string_free(char *s);

/**
 * Unbiased pass@k for `n` generations with `c` successes.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum CfStatus cf_pass_at_k(uint64_t n, uint64_t c, uint64_t k, double *out);

/**
 * Creates an empty in-memory code library with default thresholds.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum CfStatus cf_library_new(size_t embedding_dim, struct CfLibrary **out);

/**
 * Opens (or starts) a JSON-lines library file. Changes persist on insert,
 * update and [`cf_library_save`].
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CfStatus cf_library_open(const char *path, size_t embedding_dim, struct CfLibrary **out);

/**
 * Releases a library handle. Null is ignored.
 *
 * # Safety
 * `lib` must come from this library and not have been freed.
 */
void cf_library_free(struct CfLibrary *lib);

/**
 * Replaces the retrieval and weight-update parameters.
 *
 * # Safety
 * `lib` must be a live handle.
 */
enum CfStatus cf_library_configure(struct CfLibrary *lib,
                                   double t_sim,
                                   double t_w,
                                   double t_h,
                                   double alpha,
                                   double beta);

/**
 * Number of entries.
 *
 * # Safety
 * `lib` must be a live handle and `out` a valid pointer.
 */
enum CfStatus cf_library_len(const struct CfLibrary *lib, size_t *out);

/**
 * Adds validated code at the initial weight.
 *
 * # Safety
 * `lib` must be a live handle; `key` and `code` NUL-terminated strings.
 */
enum CfStatus cf_library_insert(struct CfLibrary *lib,
                                const char *key,
                                const char *code,
                                double power_mw,
                                double clk_mhz,
                                double area_mm2);

/**
 * Looks `query` up and writes the decision as JSON:
 * `{"outcome": "retrieve"|"generate", "reason": ..., "key", "similarity",
 * "weight", "code"}` with the last four null for an empty library.
 *
 * # Safety
 * `lib` must be a live handle, `query` a NUL-terminated string and
 * `out_json` a valid pointer.
 */
enum CfStatus cf_library_retrieve(const struct CfLibrary *lib, const char *query, char **out_json);

/**
 * Records one simulation outcome for `key`, then collects entries whose
 * weight fell below `t_h`.
 *
 * # Safety
 * `lib` must be a live handle and `key` a NUL-terminated string.
 */
enum CfStatus cf_library_update(struct CfLibrary *lib, const char *key, bool passed);

/**
 * Current weight of `key`.
 *
 * # Safety
 * `lib` must be a live handle, `key` a NUL-terminated string and `out` a
 * valid pointer.
 */
enum CfStatus cf_library_weight(const struct CfLibrary *lib, const char *key, double *out);

/**
 * Writes the library to its file; a no-op for in-memory libraries.
 *
 * # Safety
 * `lib` must be a live handle.
 */
enum CfStatus cf_library_save(const struct CfLibrary *lib);

/**
 * Checks a module description and writes it back in canonical JSON.
 *
 * # Safety
 * `raw_json` must be a NUL-terminated string and `out_json` a valid pointer.
 */
enum CfStatus cf_validate_description(const char *raw_json, char **out_json);

/**
 * Evaluates one configuration against a model graph with the analytical
 * cost model. Inputs and output are JSON.
 *
 * # Safety
 * `graph_json` and `config_json` must be NUL-terminated strings and
 * `out_json` a valid pointer.
 */
enum CfStatus cf_dse_evaluate(const char *graph_json, const char *config_json, char **out_json);

/**
 * Whitespace-delimited token count used for noise budgets.
 *
 * # Safety
 * `code` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CfStatus cf_token_count(const char *code, size_t *out);

/**
 * Inserts `floor(pct * code_tokens / 100)` symbols from the default
 * alphabet into the first fenced code section of `prompt`.
 *
 * # Safety
 * `prompt` must be a NUL-terminated string; `out_prompt` and
 * `out_inserted` valid pointers.
 */
enum CfStatus cf_inject_noise(const char *prompt,
                              size_t code_tokens,
                              double pct,
                              uint64_t seed,
                              char **out_prompt,
                              size_t *out_inserted);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHIPFORGE_H */
