#ifndef SEACAP_H
#define SEACAP_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every fallible call.
 */
typedef enum SeacapStatus {
  SEACAP_STATUS_OK = 0,
  SEACAP_STATUS_NULL_POINTER = 1,
  SEACAP_STATUS_INVALID_UTF8 = 2,
  SEACAP_STATUS_CONFIG = 3,
  SEACAP_STATUS_DOMAIN = 4,
  SEACAP_STATUS_CONTRACT = 5,
  SEACAP_STATUS_STATE_CORRUPTION = 6,
  SEACAP_STATUS_NON_FINITE = 7,
  SEACAP_STATUS_BUDGET = 8,
  SEACAP_STATUS_IO = 9,
  SEACAP_STATUS_JSON = 10,
  SEACAP_STATUS_PANIC = 11,
} SeacapStatus;

/**
 * Opaque simulator handle.
 */
typedef struct SeacapSimulator SeacapSimulator;

/**
 * Final-window summary of a preset run, means across seeds.
 */
typedef struct SeacapSummary {
  double reward;
  double emissions;
  double emissions_std;
  double gini;
  double fuel_variance;
  double violation_rate;
  double lambda;
} SeacapSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread. The pointer stays valid
 * until the next failing call on the same thread.
 */
const char *seacap_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *seacap_version(void);

/**
 * Creates a simulator. `scenario_json` may be null for the built-in
 * desk-scale scenario.
 *
 * # Safety
 * `scenario_json` must be null or a NUL-terminated string; `out_sim` must
 * be a valid pointer.
 */
enum SeacapStatus seacap_simulator_new(const char *scenario_json,
                                       size_t horizon,
                                       uint64_t seed,
                                       struct SeacapSimulator **out_sim);

/**
 * Releases a simulator. Null is ignored.
 *
 * # Safety
 * `sim` must be null or a handle from [`seacap_simulator_new`] that has
 * not been freed.
 */
void seacap_simulator_free(struct SeacapSimulator *sim);

/**
 * # Safety
 * `sim` must be a live handle and `out_n` a valid pointer.
 */
enum SeacapStatus seacap_simulator_n_vessels(const struct SeacapSimulator *sim, size_t *out_n);

/**
 * Starts a new episode with `seed`.
 *
 * # Safety
 * `sim` must be a live handle.
 */
enum SeacapStatus seacap_simulator_reset(struct SeacapSimulator *sim, uint64_t seed);

/**
 * Advances one step. `speeds` and `routes` hold one entry per vessel;
 * per-vessel emissions are written to `emissions_out` when it is not null.
 *
 * # Safety
 * `sim` must be a live handle; the arrays must hold `n` elements.
 */
enum SeacapStatus seacap_simulator_step(struct SeacapSimulator *sim,
                                        const double *speeds,
                                        const size_t *routes,
                                        size_t n,
                                        double *emissions_out);

/**
 * Cumulative emissions of the current episode.
 *
 * # Safety
 * `sim` must be a live handle and `out_value` a valid pointer.
 */
enum SeacapStatus seacap_simulator_cum_emissions(const struct SeacapSimulator *sim,
                                                 double *out_value);

/**
 * Whether the episode horizon has been reached.
 *
 * # Safety
 * `sim` must be a live handle and `out_done` a valid pointer.
 */
enum SeacapStatus seacap_simulator_done(const struct SeacapSimulator *sim, bool *out_done);

/**
 * Gini coefficient of non-negative burdens.
 *
 * # Safety
 * `values` must hold `n` elements and `out_value` must be valid.
 */
enum SeacapStatus seacap_gini(const double *values, size_t n, double *out_value);

/**
 * One cap-only dual step: the multiplier grows by
 * `alpha * (cum_emissions - c_max)` while over the cap.
 *
 * # Safety
 * `out_lambda` must be a valid pointer.
 */
enum SeacapStatus seacap_dual_update(double lambda,
                                     double alpha,
                                     double c_max,
                                     double cum_emissions,
                                     double *out_lambda);

/**
 * Trains a preset ("A".."D") and writes its metric files to `out_dir`.
 * `episodes` and `horizon` of 0 keep the preset defaults.
 *
 * # Safety
 * Strings must be NUL-terminated; `seeds` must hold `n_seeds` elements;
 * `summary_out` must be null or valid.
 */
enum SeacapStatus seacap_run_preset(const char *preset,
                                    const uint64_t *seeds,
                                    size_t n_seeds,
                                    size_t episodes,
                                    size_t horizon,
                                    const char *out_dir,
                                    struct SeacapSummary *summary_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEACAP_H */
