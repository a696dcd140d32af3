#ifndef AGENTSEARCH_H
#define AGENTSEARCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. The nonzero values from 1 to 4 match the command-line
 * exit codes.
 */
typedef enum AsStatus {
  AS_STATUS_OK = 0,
  AS_STATUS_CONFIG = 1,
  AS_STATUS_BACKEND = 2,
  AS_STATUS_BUDGET = 3,
  AS_STATUS_PERSISTENCE = 4,
  AS_STATUS_INVALID_ARGUMENT = 5,
  AS_STATUS_UNDEFINED_METRIC = 6,
  AS_STATUS_PANIC = 7,
  AS_STATUS_INTERRUPTED = 130,
} AsStatus;

/**
 * Phase of a run as reported by [`as_run_phase`].
 */
typedef enum AsPhase {
  AS_PHASE_MCTS = 0,
  AS_PHASE_EA = 1,
  AS_PHASE_DONE = 2,
} AsPhase;

typedef enum AsTreeFormat {
  AS_TREE_FORMAT_DOT = 0,
  AS_TREE_FORMAT_JSON = 1,
} AsTreeFormat;

/**
 * Opaque run handle.
 */
typedef struct AsRun AsRun;

typedef struct AsMetrics {
  double er;
  double norm_gini;
  double spearman;
  double rmse;
} AsMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next library call on the same thread.
 */
const char *as_last_error(void);

/**
 * Library version as a static string.
 */
const char *as_version(void);

/**
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void as_string_free(char *s);

/**
 * Starts a run. `config_json` may be NULL for defaults; `ablation` is one
 * of "none", "no-mcts", "no-ea", "random-root", or NULL for "none".
 *
 * # Safety
 * String arguments must be NUL-terminated or NULL; `out` must be writable.
 */
enum AsStatus as_run_new(const char *config_json, const char *ablation, struct AsRun **out);

/**
 * Opens a saved run for resuming or reporting.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` must be writable.
 */
enum AsStatus as_run_load(const char *path, struct AsRun **out);

/**
 * # Safety
 * `run` must be NULL or a live handle; it is invalid afterwards.
 */
void as_run_free(struct AsRun *run);

/**
 * # Safety
 * `run` must be a live handle and `phase` writable.
 */
enum AsStatus as_run_phase(struct AsRun *run, enum AsPhase *phase);

/**
 * One search iteration.
 *
 * # Safety
 * `run` must be a live handle.
 */
enum AsStatus as_run_step(struct AsRun *run);

/**
 * Steps until the run is done.
 *
 * # Safety
 * `run` must be a live handle.
 */
enum AsStatus as_run_until_done(struct AsRun *run);

/**
 * # Safety
 * `run` must be a live handle; `path` NUL-terminated.
 */
enum AsStatus as_run_save(struct AsRun *run, const char *path);

/**
 * Final program as JSON (id, label, reward, metrics, source).
 *
 * # Safety
 * `run` must be a live handle and `out` writable.
 */
enum AsStatus as_run_best_json(struct AsRun *run, char **out);

/**
 * Leaderboard as CSV with a header row.
 *
 * # Safety
 * `run` must be a live handle and `out` writable.
 */
enum AsStatus as_run_leaderboard_csv(struct AsRun *run, size_t top_n, char **out);

/**
 * # Safety
 * `run` must be a live handle and `out` writable.
 */
enum AsStatus as_run_export_tree(struct AsRun *run, enum AsTreeFormat format, char **out);

/**
 * Evaluates predictions against labels. `rank_sum_gini` selects the
 * rank-sum Gini variant.
 *
 * # Safety
 * `y_hat` and `y` must each point to `n` readable doubles; `out` writable.
 */
enum AsStatus as_metrics_compute(const double *y_hat,
                                 const double *y,
                                 size_t n,
                                 bool rank_sum_gini,
                                 struct AsMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AGENTSEARCH_H */
