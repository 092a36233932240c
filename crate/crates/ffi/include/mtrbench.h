#ifndef MTRBENCH_H
#define MTRBENCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum MtrbStatus {
  MTRB_STATUS_OK = 0,
  MTRB_STATUS_NULL_POINTER = 1,
  MTRB_STATUS_INVALID_ARGUMENT = 2,
  MTRB_STATUS_IO = 3,
  MTRB_STATUS_PARSE = 4,
  MTRB_STATUS_OUT_OF_BOUNDS = 5,
  MTRB_STATUS_EVALUATION = 6,
  MTRB_STATUS_PANIC = 7,
} MtrbStatus;

/**
 * Objective bound to a cross-section library, geometry and transport settings.
 */
typedef struct MtrbEvaluator MtrbEvaluator;

/**
 * Finished optimizer run.
 */
typedef struct MtrbOptRun MtrbOptRun;

/**
 * One objective evaluation.
 */
typedef struct MtrbEvaluation {
  double u_density;
  double w_density;
  double k;
  double k_std;
  double fast_flux;
  double fast_flux_std;
  double fitness;
  uint64_t eval_index;
  double wall_time_ms;
} MtrbEvaluation;

/**
 * One entry of an optimizer history.
 */
typedef struct MtrbHistoryEntry {
  struct MtrbEvaluation eval;
  uint64_t generation;
} MtrbHistoryEntry;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer stays
 * valid until the next library call on the same thread.
 */
const char *mtrb_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mtrb_version(void);

/**
 * Benchmark fitness for a given k and fast flux with the default objective
 * constants. Lower is better.
 */
double mtrb_fitness(double k, double fast_flux);

/**
 * Creates an evaluator from run-config JSON (NULL for defaults).
 *
 * # Safety
 * `config_json` is NULL or a NUL-terminated string; `out` is a valid pointer.
 */
enum MtrbStatus mtrb_evaluator_new(const char *config_json, struct MtrbEvaluator **out);

/**
 * Releases an evaluator. NULL is ignored.
 *
 * # Safety
 * `ev` is NULL or a handle from [`mtrb_evaluator_new`] not yet freed.
 */
void mtrb_evaluator_free(struct MtrbEvaluator *ev);

/**
 * Evaluates one (U, W) point.
 *
 * # Safety
 * `ev` is a live evaluator handle; `out` is a valid pointer.
 */
enum MtrbStatus mtrb_evaluate(const struct MtrbEvaluator *ev,
                              double u_density,
                              double w_density,
                              struct MtrbEvaluation *out);

/**
 * Evaluates `n` points in parallel. Results are in input order; on failure
 * the status describes the first failed point and `out` is left partially
 * written.
 *
 * # Safety
 * `u` and `w` point to `n` doubles each and `out` to `n` writable records.
 */
enum MtrbStatus mtrb_evaluate_batch(const struct MtrbEvaluator *ev,
                                    const double *u,
                                    const double *w,
                                    size_t n,
                                    struct MtrbEvaluation *out);

/**
 * Number of evaluation indices the evaluator has handed out.
 *
 * # Safety
 * `ev` is a live evaluator handle; `out` is a valid pointer.
 */
enum MtrbStatus mtrb_evaluator_count(const struct MtrbEvaluator *ev, uint64_t *out);

/**
 * Runs an optimizer with a fresh evaluator. `algorithm` is `"jaya"` or
 * `"ppo-es"`; `seed` replaces the transport and optimizer seeds. A run that
 * stops early still succeeds; see [`mtrb_run_failure`].
 *
 * # Safety
 * `config_json` is NULL or a NUL-terminated string, `algorithm` is a
 * NUL-terminated string and `out` is a valid pointer.
 */
enum MtrbStatus mtrb_optimize(const char *config_json,
                              const char *algorithm,
                              uint64_t seed,
                              struct MtrbOptRun **out);

/**
 * Releases a run. NULL is ignored.
 *
 * # Safety
 * `run` is NULL or a handle from [`mtrb_optimize`] not yet freed.
 */
void mtrb_run_free(struct MtrbOptRun *run);

/**
 * Number of history entries.
 *
 * # Safety
 * `run` is a live run handle; `out` is a valid pointer.
 */
enum MtrbStatus mtrb_run_len(const struct MtrbOptRun *run, size_t *out);

/**
 * History entry `index`, in evaluation order.
 *
 * # Safety
 * `run` is a live run handle; `out` is a valid pointer.
 */
enum MtrbStatus mtrb_run_get(const struct MtrbOptRun *run,
                             size_t index,
                             struct MtrbHistoryEntry *out);

/**
 * Best entry of the run; `MTRB_STATUS_EVALUATION` when no evaluation succeeded.
 *
 * # Safety
 * `run` is a live run handle; `out` is a valid pointer.
 */
enum MtrbStatus mtrb_run_best(const struct MtrbOptRun *run, struct MtrbHistoryEntry *out);

/**
 * Why the run stopped early, or NULL if it used its whole budget. Valid
 * until the run is freed.
 *
 * # Safety
 * `run` is NULL or a live run handle.
 */
const char *mtrb_run_failure(const struct MtrbOptRun *run);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MTRBENCH_H */
