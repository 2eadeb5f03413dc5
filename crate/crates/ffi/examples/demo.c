/* Build: cc demo.c -I../include ../../../target/debug/libw2lab_ffi.a -lm -lpthread -ldl */
#include <math.h>
#include <stdio.h>
#include "w2lab.h"

#define CHECK(call)                                                           \
  do {                                                                        \
    W2Status st_ = (call);                                                    \
    if (st_ != W2_STATUS_OK) {                                                \
      fprintf(stderr, "%s -> %d: %s\n", #call, (int)st_, w2_last_error());    \
      return 1;                                                               \
    }                                                                         \
  } while (0)

int main(void) {
  W2Schedule *sched = NULL;
  W2Target *target = NULL;
  double mean[2] = {0.0, 0.0};
  double mu_hat[2] = {3.0, 0.0};
  double w = 0.0, ws = 0.0;

  CHECK(w2_schedule_harmonic(9, &sched));
  CHECK(w2_target_gaussian(mean, 2, 1.0, &target));
  CHECK(w2_exact_w2(sched, target, mu_hat, 2, NULL, &w, &ws));
  /* unit variance: the error is t0 |mu_hat - mu| = 0.1 * 3 */
  printf("exact W2 = %.15f\n", w);
  if (fabs(w - 0.3) > 1e-12) return 2;

  W2Schedule *bad = NULL;
  if (w2_schedule_constant(4, 1.5, 0.0, &bad) != W2_STATUS_VALIDATION) return 3;
  printf("rejected: %s\n", w2_last_error());

  char *json = NULL;
  CHECK(w2_schedule_to_json(sched, &json));
  w2_string_free(json);
  w2_schedule_free(sched);
  w2_target_free(target);
  return 0;
}
