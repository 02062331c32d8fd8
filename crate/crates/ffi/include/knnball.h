#ifndef KNNBALL_H
#define KNNBALL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum KbStatus {
  KB_STATUS_OK = 0,
  KB_STATUS_INVALID_ARGUMENT = 1,
  KB_STATUS_THRESHOLD_OUT_OF_RANGE = 2,
  KB_STATUS_GRID_DEGENERATE = 3,
  KB_STATUS_DENSITY = 4,
  KB_STATUS_IO = 5,
  KB_STATUS_PARSE = 6,
  KB_STATUS_NULL_POINTER = 7,
  // The experiment has not been run yet.
  KB_STATUS_NOT_RUN = 8,
  KB_STATUS_PANIC = 9,
} KbStatus;

// Opaque experiment handle.
typedef struct KbExperiment KbExperiment;

// One replicate's outputs.
typedef struct KbRecord {
  uint64_t replicate_id;
  uint64_t seed;
  uint64_t count;
  uint64_t hat_count;
  double max_content;
  double centered_max;
  bool occupancy_ok;
} KbRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failure on this thread, or null.
//
// The pointer stays valid until the next failing call on the same thread.
const char *kb_last_error(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void kb_string_free(char *s);

// Volume of the unit ball in `d` dimensions.
//
// # Safety
// `out` must be valid for writes.
enum KbStatus kb_unit_ball_volume(size_t d, double *out);

// Volume of `{x in B(0,1) : x_1 >= a}`.
//
// # Safety
// `out` must be valid for writes.
enum KbStatus kb_spherical_cap_volume(size_t d, double a, double *out);

// Volume of the union of two radius-`r` balls with centers `t` apart.
//
// # Safety
// `out` must be valid for writes.
enum KbStatus kb_union_two_balls(size_t d, double r, double t, double *out);

// Cone-sector approximation of the unit-ball union volume.
//
// # Safety
// `out` must be valid for writes.
enum KbStatus kb_union_two_balls_cone_sector(size_t d, double t, double *out);

// Volume of `B(center, r)` inside the unit cube.
//
// # Safety
// `center` must point to `d` readable doubles; `out` must be valid for writes.
enum KbStatus kb_ball_box_volume(const double *center, size_t d, double r, double *out);

// Threshold `v` for sample size `n`, order `k`, level `t`.
//
// # Safety
// `out` must be valid for writes.
enum KbStatus kb_threshold(uint64_t n, uint64_t k, double t, double *out);

// Exact expected number of exceedances.
//
// # Safety
// `out` must be valid for writes.
enum KbStatus kb_expected_count(uint64_t n, uint64_t k, double t, double *out);

// `P(Bin(m, s) < k)`.
//
// # Safety
// `out` must be valid for writes.
enum KbStatus kb_binomial_tail(uint64_t m, uint64_t k, double s, double *out);

// Standard Gumbel distribution function.
double kb_gumbel_cdf(double t);

// Distance from each of `n` points to its `k`-th nearest neighbour.
//
// `points` is row-major, `n * d` doubles in `[0, 1]`; `out` receives `n` radii.
//
// # Safety
// `points` must hold `n * d` readable doubles and `out` `n` writable ones.
enum KbStatus kb_kth_nn_radii(const double *points, size_t n, size_t d, size_t k, double *out);

// Creates an experiment from a JSON configuration.
//
// # Safety
// `config_json` must be a NUL-terminated string; `out` must be valid for writes.
enum KbStatus kb_experiment_new(const char *config_json, struct KbExperiment **out);

// Runs all replicates. `workers == 0` uses every core.
//
// # Safety
// `h` must be a live handle from [`kb_experiment_new`].
enum KbStatus kb_experiment_run(struct KbExperiment *h, size_t workers);

// Summary of a finished run as JSON; free with [`kb_string_free`].
//
// # Safety
// `h` must be a live handle; `out` must be valid for writes.
enum KbStatus kb_experiment_summary_json(const struct KbExperiment *h, char **out);

// Writes `replicates.csv` and `summary.json` into `dir`.
//
// # Safety
// `h` must be a live handle; `dir` a NUL-terminated path.
enum KbStatus kb_experiment_persist(const struct KbExperiment *h, const char *dir);

// Number of replicate records.
//
// # Safety
// `h` must be a live handle; `out` must be valid for writes.
enum KbStatus kb_experiment_record_count(const struct KbExperiment *h, size_t *out);

// Record `i`, in replicate order.
//
// # Safety
// `h` must be a live handle; `out` must be valid for writes.
enum KbStatus kb_experiment_record(const struct KbExperiment *h, size_t i, struct KbRecord *out);

// Releases an experiment. Null is ignored.
//
// # Safety
// `h` must come from [`kb_experiment_new`] and not have been freed.
void kb_experiment_free(struct KbExperiment *h);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KNNBALL_H */
