#ifndef RIS_SEMCOM_H
#define RIS_SEMCOM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every `rsc_*` call.
typedef enum RscStatus {
  RSC_STATUS_OK = 0,
  RSC_STATUS_NULL_POINTER = 1,
  // A string argument was not valid UTF-8, or an index was out of bounds.
  RSC_STATUS_INVALID_ARGUMENT = 2,
  RSC_STATUS_CONFIG = 3,
  RSC_STATUS_CONFIG_PARSE = 4,
  RSC_STATUS_DIMENSION = 5,
  RSC_STATUS_OUT_OF_RANGE = 6,
  RSC_STATUS_NON_FINITE = 7,
  RSC_STATUS_ZERO_DISTANCE = 8,
  RSC_STATUS_INSUFFICIENT_CP = 9,
  RSC_STATUS_INSUFFICIENT_REPLAY = 10,
  RSC_STATUS_SEARCH_SPACE_TOO_LARGE = 11,
  RSC_STATUS_CHECKPOINT = 12,
  RSC_STATUS_IO = 13,
  // The self test ran but at least one check failed.
  RSC_STATUS_SELFTEST_FAILED = 14,
  RSC_STATUS_BUFFER_TOO_SMALL = 15,
  RSC_STATUS_PANIC = 99,
} RscStatus;

// Metrics rows of a finished run, sorted by seed, interval and user.
typedef struct RscResults RscResults;

// Experiment configuration.
typedef struct RscSpec RscSpec;

// One metrics row. `reward_kind` is 0 for accuracy, 1 for MSE, 2 for rate.
typedef struct RscRow {
  size_t seed;
  size_t interval;
  size_t user;
  uint32_t reward_kind;
  bool blocked;
  double acc;
  double mse;
  double reward;
  double sum_rate;
  size_t rows_used;
} RscRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Description of the last failed call on this thread, or null if the last
// call succeeded. Valid until the next `rsc_*` call on the same thread.
const char *rsc_last_error(void);

// Library version as a static NUL-terminated string.
const char *rsc_version(void);

// Writes a handle holding the default configuration to `*out`.
//
// # Safety
// `out` must be null or valid for writes.
enum RscStatus rsc_spec_default(struct RscSpec **out);

// Parses and validates a TOML configuration; absent keys keep their
// defaults. Syntax errors and unknown keys give [`RscStatus::Config`] here
// and [`RscStatus::ConfigParse`] from [`rsc_spec_load`].
//
// # Safety
// `toml` must be null or a NUL-terminated string; `out` null or writable.
enum RscStatus rsc_spec_from_toml(const char *toml, struct RscSpec **out);

// Loads and validates a TOML configuration file.
//
// # Safety
// `path` must be null or a NUL-terminated string; `out` null or writable.
enum RscStatus rsc_spec_load(const char *path, struct RscSpec **out);

// Fully resolved configuration as TOML, to be released with
// [`rsc_string_free`].
//
// # Safety
// `spec` must be null or a live handle; `out` null or writable.
enum RscStatus rsc_spec_to_toml(const struct RscSpec *spec, char **out);

// # Safety
// `spec` must be null or a handle from this library not yet freed.
void rsc_spec_free(struct RscSpec *spec);

// # Safety
// `s` must be null or a string returned by this library not yet freed.
void rsc_string_free(char *s);

// Runs `n_seeds` independent seeds. When `csv_path` is non-null the metrics
// CSV is written there as well. On a runtime failure the rows produced so
// far are still returned through `*out` alongside the error status.
//
// # Safety
// `spec` must be a live handle, `csv_path` null or a NUL-terminated string,
// `out` writable.
enum RscStatus rsc_run(const struct RscSpec *spec,
                       size_t n_seeds,
                       const char *csv_path,
                       struct RscResults **out);

// Number of rows in `results`, 0 for a null handle.
//
// # Safety
// `results` must be null or a live handle.
size_t rsc_results_len(const struct RscResults *results);

// Copies row `index` into `*out`.
//
// # Safety
// `results` must be a live handle and `out` writable.
enum RscStatus rsc_results_get(const struct RscResults *results, size_t index, struct RscRow *out);

// # Safety
// `results` must be null or a handle from this library not yet freed.
void rsc_results_free(struct RscResults *results);

// Exhaustive sum-rate search over the first `rows` RIS rows of the seed-0
// world. Writes `rows` phase indices to `indices` (capacity `capacity`) and
// the best sum rate to `*sum_rate`.
//
// # Safety
// `spec` must be a live handle, `indices` valid for `capacity` writes and
// `sum_rate` writable.
enum RscStatus rsc_oracle(const struct RscSpec *spec,
                          size_t rows,
                          uint8_t *indices,
                          size_t capacity,
                          double *sum_rate);

// Built-in checks plus a small deterministic experiment. `*passed` receives
// the verdict; the experiment's CSV goes to `csv_path` when non-null.
// Returns [`RscStatus::SelftestFailed`] if any check failed.
//
// # Safety
// `csv_path` must be null or a NUL-terminated string; `passed` null or
// writable.
enum RscStatus rsc_selftest(uint64_t seed, const char *csv_path, bool *passed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RIS_SEMCOM_H */
