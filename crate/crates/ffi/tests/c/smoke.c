#include <stdio.h>
#include <string.h>

#include "mtrbench.h"

#define CHECK(cond)                                              \
  do {                                                           \
    if (!(cond)) {                                               \
      fprintf(stderr, "check failed at line %d: %s\n", __LINE__, \
              #cond);                                            \
      return 1;                                                  \
    }                                                            \
  } while (0)

static const char *CONFIG =
    "{\"mc\": {\"particles_per_batch\": 150, \"n_batches\": 8, "
    "\"n_inactive\": 3, \"seed\": 5},"
    " \"jaya\": {\"pop_size\": 4, \"max_evals\": 8}}";

int main(void) {
  MtrbEvaluator *ev = NULL;
  CHECK(mtrb_evaluator_new(CONFIG, &ev) == MTRB_STATUS_OK);

  MtrbEvaluation e;
  CHECK(mtrb_evaluate(ev, 10.0, 0.001, &e) == MTRB_STATUS_OK);
  CHECK(e.k > 0.0 && e.fast_flux > 0.0);
  CHECK(e.fitness == mtrb_fitness(e.k, e.fast_flux));

  CHECK(mtrb_evaluate(ev, 100.0, 1.0, &e) == MTRB_STATUS_OUT_OF_BOUNDS);
  CHECK(strstr(mtrb_last_error_message(), "outside bounds") != NULL);
  mtrb_evaluator_free(ev);

  MtrbOptRun *run = NULL;
  CHECK(mtrb_optimize(CONFIG, "jaya", 2, &run) == MTRB_STATUS_OK);
  size_t n = 0;
  CHECK(mtrb_run_len(run, &n) == MTRB_STATUS_OK && n == 8);
  MtrbHistoryEntry best;
  CHECK(mtrb_run_best(run, &best) == MTRB_STATUS_OK);
  mtrb_run_free(run);

  printf("mtrbench %s: best fitness %.6f at U=%.3f W=%.3f\n", mtrb_version(),
         best.eval.fitness, best.eval.u_density, best.eval.w_density);
  return 0;
}
