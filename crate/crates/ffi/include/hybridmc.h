#ifndef HYBRIDMC_H
#define HYBRIDMC_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes shared by every fallible call.
typedef enum HybmcStatus {
  HYBMC_STATUS_OK = 0,
  // A required pointer argument was null.
  HYBMC_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  HYBMC_STATUS_INVALID_UTF8 = 2,
  // The config was malformed or failed validation.
  HYBMC_STATUS_CONFIG = 3,
  // A file could not be read or written.
  HYBMC_STATUS_IO = 4,
  // Sampling failed, or every replicate of a benchmark failed.
  HYBMC_STATUS_RUNTIME = 5,
  // An index or length argument was out of range.
  HYBMC_STATUS_OUT_OF_RANGE = 6,
  // The library panicked; the handle involved should be freed.
  HYBMC_STATUS_PANIC = 7,
} HybmcStatus;

// The outcome of a benchmark: per-replicate reports plus a JSON summary.
typedef struct HybmcBench HybmcBench;

// An experiment config.
typedef struct HybmcConfig HybmcConfig;

// The target density of a config.
typedef struct HybmcTarget HybmcTarget;

// One replicate's measures. Absent optional measures are NaN (`a`, `eta`)
// or -1 (`n_b`).
typedef struct HybmcReport {
  uint64_t seed;
  uint64_t t;
  double a;
  double h;
  double var_h;
  double tau;
  double ess;
  int64_t n_b;
  double eta;
  double wall_clock;
} HybmcReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// The message of the last failing call on this thread, or null.
const char *hybmc_last_error(void);

// The library version as a static string.
const char *hybmc_version(void);

// Parses and validates a JSON config.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum HybmcStatus hybmc_config_from_json(const char *json, struct HybmcConfig **out);

// Reads and validates a JSON config file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum HybmcStatus hybmc_config_load(const char *path, struct HybmcConfig **out);

// The config as pretty JSON. Free the result with [`hybmc_string_free`].
//
// # Safety
// `cfg` must come from this library; `out` must be a valid pointer.
enum HybmcStatus hybmc_config_to_json(const struct HybmcConfig *cfg, char **out);

// Replaces the base seed.
//
// # Safety
// `cfg` must come from this library.
enum HybmcStatus hybmc_config_set_seed(struct HybmcConfig *cfg, uint64_t seed);

// Replaces the replicate count. The config is left unchanged if the new
// value fails validation.
//
// # Safety
// `cfg` must come from this library.
enum HybmcStatus hybmc_config_set_replicates(struct HybmcConfig *cfg, size_t replicates);

// Replaces the worker count; 0 means the available parallelism.
//
// # Safety
// `cfg` must come from this library.
enum HybmcStatus hybmc_config_set_workers(struct HybmcConfig *cfg, size_t workers);

// Replaces the budget with a fixed number of iterations per run.
//
// # Safety
// `cfg` must come from this library.
enum HybmcStatus hybmc_config_set_iterations(struct HybmcConfig *cfg, size_t iterations);

// # Safety
// `cfg` must come from this library or be null; it must not be used afterwards.
void hybmc_config_free(struct HybmcConfig *cfg);

// Runs every configured algorithm for the configured replicates.
//
// Returns `Ok` when at least one replicate completed; failed replicates are
// listed in the summary JSON and counted by [`hybmc_bench_failure_count`].
//
// # Safety
// `cfg` must come from this library; `out` must be a valid pointer.
enum HybmcStatus hybmc_run_benchmark(const struct HybmcConfig *cfg, struct HybmcBench **out);

// Number of completed replicates, 0 for a null handle.
//
// # Safety
// `bench` must come from this library or be null.
size_t hybmc_bench_report_count(const struct HybmcBench *bench);

// Number of failed replicates, 0 for a null handle.
//
// # Safety
// `bench` must come from this library or be null.
size_t hybmc_bench_failure_count(const struct HybmcBench *bench);

// Copies report `index` into `out`.
//
// # Safety
// `bench` must come from this library; `out` must be a valid pointer.
enum HybmcStatus hybmc_bench_report(const struct HybmcBench *bench,
                                    size_t index,
                                    struct HybmcReport *out);

// Algorithm label of report `index`, or null when out of range.
//
// # Safety
// `bench` must come from this library or be null.
const char *hybmc_bench_algorithm(const struct HybmcBench *bench, size_t index);

// The benchmark summary as JSON, owned by the handle.
//
// # Safety
// `bench` must come from this library or be null.
const char *hybmc_bench_summary_json(const struct HybmcBench *bench);

// # Safety
// `bench` must come from this library or be null; it must not be used afterwards.
void hybmc_bench_free(struct HybmcBench *bench);

// Builds the target density of `cfg`.
//
// # Safety
// `cfg` must come from this library; `out` must be a valid pointer.
enum HybmcStatus hybmc_target_new(const struct HybmcConfig *cfg, struct HybmcTarget **out);

// Dimension of the target, 0 for a null handle.
//
// # Safety
// `target` must come from this library or be null.
size_t hybmc_target_dim(const struct HybmcTarget *target);

// Unnormalized log-density at `x[0..len]`; `len` must equal the dimension.
//
// # Safety
// `target` must come from this library, `x` must point to `len` doubles and
// `out` must be a valid pointer.
enum HybmcStatus hybmc_target_log_density(const struct HybmcTarget *target,
                                          const double *x,
                                          size_t len,
                                          double *out);

// # Safety
// `target` must come from this library or be null; it must not be used afterwards.
void hybmc_target_free(struct HybmcTarget *target);

// Frees a string returned by [`hybmc_config_to_json`].
//
// # Safety
// `s` must come from this library or be null; it must not be used afterwards.
void hybmc_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HYBRIDMC_H */
