#ifndef VOINET_H
#define VOINET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>
#include <stdbool.h>

/**
 * Result codes. Nonzero values mirror the error categories of the library.
 */
typedef enum VoinetStatus {
  VOINET_STATUS_OK = 0,
  VOINET_STATUS_NULL_POINTER = 1,
  VOINET_STATUS_INVALID_UTF8 = 2,
  VOINET_STATUS_CONFIG = 3,
  VOINET_STATUS_MODEL = 4,
  VOINET_STATUS_DIMENSION = 5,
  VOINET_STATUS_NUMERIC = 6,
  VOINET_STATUS_TRACE = 7,
  VOINET_STATUS_CALIBRATION = 8,
  VOINET_STATUS_IO = 9,
  VOINET_STATUS_FORMAT = 10,
  VOINET_STATUS_OUT_OF_RANGE = 11,
  VOINET_STATUS_PANIC = 12,
} VoinetStatus;

/**
 * Scenario configuration handle.
 */
typedef struct VoinetScenario VoinetScenario;

/**
 * Monte Carlo summary handle.
 */
typedef struct VoinetSummary VoinetSummary;

/**
 * Single-episode trace handle.
 */
typedef struct VoinetTrace VoinetTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next voinet call on the same thread.
 */
const char *voinet_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *voinet_version(void);

/**
 * # Safety
 * `s` must come from a voinet call returning an owned string, or be null.
 */
void voinet_string_free(char *s);

/**
 * Built-in two-hop inverted pendulum scenario.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage.
 */
enum VoinetStatus voinet_scenario_pendulum(struct VoinetScenario **out);

/**
 * Parse and validate a scenario document.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` valid writable storage.
 */
enum VoinetStatus voinet_scenario_from_json(const char *json, struct VoinetScenario **out);

/**
 * # Safety
 * `scenario` must be a live handle; `out` valid writable storage.
 */
enum VoinetStatus voinet_scenario_to_json(const struct VoinetScenario *scenario, char **out);

/**
 * Replace the per-hop policies, e.g. `"dvoi"` or `"dvoi,periodic:1"`.
 *
 * # Safety
 * `scenario` must be a live handle; `spec` a NUL-terminated string.
 */
enum VoinetStatus voinet_scenario_set_policy(struct VoinetScenario *scenario, const char *spec);

/**
 * `"oracle"` or `"estimated"`.
 *
 * # Safety
 * `scenario` must be a live handle; `mode` a NUL-terminated string.
 */
enum VoinetStatus voinet_scenario_set_input_mode(struct VoinetScenario *scenario, const char *mode);

/**
 * Set the multiplier of a 1-based hop.
 *
 * # Safety
 * `scenario` must be a live handle.
 */
enum VoinetStatus voinet_scenario_set_lambda(struct VoinetScenario *scenario,
                                             size_t hop,
                                             double lambda);

/**
 * # Safety
 * `scenario` must be a live handle or null; it is invalid afterwards.
 */
void voinet_scenario_free(struct VoinetScenario *scenario);

/**
 * Simulate one episode.
 *
 * # Safety
 * `scenario` must be a live handle; `out` valid writable storage.
 */
enum VoinetStatus voinet_run_episode(const struct VoinetScenario *scenario,
                                     uint64_t seed,
                                     struct VoinetTrace **out);

/**
 * Number of recorded steps of a loop.
 *
 * # Safety
 * `trace` must be a live handle; `out` valid writable storage.
 */
enum VoinetStatus voinet_trace_steps(const struct VoinetTrace *trace,
                                     size_t loop_index,
                                     size_t *out);

/**
 * Realized quadratic cost summed over loops.
 *
 * # Safety
 * `trace` must be a live handle; `out` valid writable storage.
 */
enum VoinetStatus voinet_trace_cost(const struct VoinetTrace *trace, double *out);

/**
 * Transmissions of a loop at a 1-based hop.
 *
 * # Safety
 * `trace` must be a live handle; `out` valid writable storage.
 */
enum VoinetStatus voinet_trace_trigger_count(const struct VoinetTrace *trace,
                                             size_t loop_index,
                                             size_t hop,
                                             uint64_t *out);

/**
 * Write the trace as CSV.
 *
 * # Safety
 * `trace` must be a live handle; `path` a NUL-terminated string.
 */
enum VoinetStatus voinet_trace_write_csv(const struct VoinetTrace *trace, const char *path);

/**
 * # Safety
 * `trace` must be a live handle or null; it is invalid afterwards.
 */
void voinet_trace_free(struct VoinetTrace *trace);

/**
 * Monte Carlo over seeds `seed..seed + runs` (`runs >= 2`).
 *
 * # Safety
 * `scenario` must be a live handle; `out` valid writable storage.
 */
enum VoinetStatus voinet_monte_carlo(const struct VoinetScenario *scenario,
                                     size_t runs,
                                     uint64_t seed,
                                     struct VoinetSummary **out);

/**
 * # Safety
 * `summary` must be a live handle; `out` valid writable storage.
 */
enum VoinetStatus voinet_summary_mean_cost(const struct VoinetSummary *summary, double *out);

/**
 * # Safety
 * `summary` must be a live handle; `out` valid writable storage.
 */
enum VoinetStatus voinet_summary_augmented_cost(const struct VoinetSummary *summary, double *out);

/**
 * Total request rate at a 1-based hop.
 *
 * # Safety
 * `summary` must be a live handle; `out` valid writable storage.
 */
enum VoinetStatus voinet_summary_rate(const struct VoinetSummary *summary, size_t hop, double *out);

/**
 * # Safety
 * `summary` must be a live handle; `out` valid writable storage.
 */
enum VoinetStatus voinet_summary_to_json(const struct VoinetSummary *summary, char **out);

/**
 * # Safety
 * `summary` must be a live handle or null; it is invalid afterwards.
 */
void voinet_summary_free(struct VoinetSummary *summary);

/**
 * `lambda - x^T (A^h)^T G A^h x` on raw row-major arrays: `xtilde` has `n`
 * entries, `a` and `weight` have `n * n`.
 *
 * # Safety
 * The array pointers must reference the stated number of readable doubles.
 */
enum VoinetStatus voinet_dvoi_value(const double *xtilde,
                                    const double *a,
                                    const double *weight,
                                    size_t n,
                                    size_t lookahead,
                                    double lambda,
                                    double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VOINET_H */
