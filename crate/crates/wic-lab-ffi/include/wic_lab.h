/* C interface to the wic-lab grid-world skill-discovery library. */

#ifndef WIC_LAB_H
#define WIC_LAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible function.
 */
typedef enum WicLabStatus {
  WIC_LAB_OK = 0,
  /**
   * A caller-supplied pointer was null.
   */
  WIC_LAB_NULL_POINTER = 1,
  /**
   * A caller-supplied string was not valid UTF-8.
   */
  WIC_LAB_INVALID_UTF8 = 2,
  /**
   * A configuration field was rejected.
   */
  WIC_LAB_CONFIG_ERROR = 3,
  /**
   * An API precondition was violated.
   */
  WIC_LAB_CONTRACT_ERROR = 4,
  WIC_LAB_IO_ERROR = 5,
  WIC_LAB_PARSE_ERROR = 6,
  /**
   * The core library panicked; the handle state is unspecified.
   */
  WIC_LAB_INTERNAL_ERROR = 7,
} WicLabStatus;

/**
 * Opaque experiment configuration.
 */
typedef struct WicLabConfig WicLabConfig;

/**
 * Opaque trained run: the policy, baseline, and objective model produced by
 * `wic_lab_train`, plus the logged metrics.
 */
typedef struct WicLabRun WicLabRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message for the calling thread into `buf`
 * (NUL-terminated, truncated to `len`). Returns the full message length
 * in bytes, excluding the NUL.
 */
uintptr_t wic_lab_last_error(char *buf, uintptr_t len);

/**
 * Creates a config with the tabular 15x15 experiment defaults.
 * `method` is 0 for the Wasserstein objective, 1 for the variational one.
 */
struct WicLabConfig *wic_lab_config_tabular15(uint32_t method);

/**
 * Creates a config with the four-rooms experiment defaults.
 */
struct WicLabConfig *wic_lab_config_four_rooms(uint32_t method);

/**
 * Parses a flat `key = value` config file. Returns null on failure; call
 * `wic_lab_last_error` for the reason.
 */
struct WicLabConfig *wic_lab_config_from_file(const char *path);

/**
 * Sets one config field by key, e.g. `wic_lab_config_set(c, "seed", "3")`.
 */
enum WicLabStatus wic_lab_config_set(struct WicLabConfig *cfg, const char *key, const char *value);

void wic_lab_config_free(struct WicLabConfig *cfg);

/**
 * Trains the configured experiment, writing metrics and checkpoints under
 * `out_dir`, and returns a handle to the trained artifacts via `out_run`.
 */
enum WicLabStatus wic_lab_train(const struct WicLabConfig *cfg,
                                const char *out_dir,
                                struct WicLabRun **out_run);

void wic_lab_run_free(struct WicLabRun *run);

/**
 * Final logged metrics of a trained run.
 */
enum WicLabStatus wic_lab_run_final_metrics(const struct WicLabRun *run,
                                            double *mean_episodic_coverage,
                                            uint64_t *lifetime_coverage,
                                            double *mean_return);

/**
 * Rolls out the trained policy `rollouts` times per skill and reports the
 * mean shortest-path distance from start to endpoint for one skill.
 */
enum WicLabStatus wic_lab_run_endpoint_distance(const struct WicLabRun *run,
                                                uintptr_t skill,
                                                uintptr_t rollouts,
                                                uint64_t eval_seed,
                                                double *out_mean_distance);

/**
 * Exact 1-Wasserstein distance between two weighted point sets on a named
 * grid (`environment`: 0 = open 15x15, 1 = four rooms) under the
 * shortest-path metric. Cells are `row * width + col` indices; weights must
 * each sum to 1.
 */
enum WicLabStatus wic_lab_grid_w1(uint32_t environment,
                                  const uintptr_t *mu_cells,
                                  const double *mu_weights,
                                  uintptr_t mu_len,
                                  const uintptr_t *nu_cells,
                                  const double *nu_weights,
                                  uintptr_t nu_len,
                                  double *out_distance);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WIC_LAB_H */
