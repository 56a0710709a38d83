#ifndef INVOPT_H
#define INVOPT_H

/* Generated by cbindgen from invopt-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Success.
#define INVOPT_OK 0

// Null pointer or otherwise invalid argument.
#define INVOPT_EINVAL -1

// Operation failed; see `invopt_last_error`.
#define INVOPT_EFAIL -2

// Output buffer too small.
#define INVOPT_ENOSPACE -3

// Opaque dataset handle.
typedef struct InvoptDataset InvoptDataset;

// Opaque credible region handle.
typedef struct InvoptRegion InvoptRegion;

// Opaque multi-chain sampler output.
typedef struct InvoptRun InvoptRun;

// Multi-chain configuration mirror of the library defaults.
typedef struct InvoptChainConfig {
  size_t n_chains;
  size_t block_size;
  size_t max_iters;
  double warmup_fraction;
  double psrf_threshold;
  double target_accept_lo;
  double target_accept_hi;
  uint64_t seed;
} InvoptChainConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message into `buf` (NUL-terminated, truncated to
// `cap`). Returns the full message length in bytes, or 0 when no error is
// recorded.
//
// # Safety
// `buf` must point to `cap` writable bytes, or be null (length query).
size_t invopt_last_error(char *buf, size_t cap);

// Library default chain configuration with the given seed.
struct InvoptChainConfig invopt_chain_config_default(uint64_t seed);

// Generates a dataset. `family`: 0 = LP, 1 = QP. `error_model`: 1 =
// decision-space (noise_param is sigma^2), 2 = objective-space
// (noise_param is kappa). Returns null on failure.
struct InvoptDataset *invopt_dataset_generate(int family,
                                              int error_model,
                                              size_t n,
                                              size_t m,
                                              size_t count,
                                              double noise_param,
                                              uint64_t seed);

// Loads a dataset JSON file.
//
// # Safety
// `path` must be a NUL-terminated string.
struct InvoptDataset *invopt_dataset_load(const char *path);

// Saves a dataset as JSON.
//
// # Safety
// `ds` must be a live handle; `path` a NUL-terminated string.
int invopt_dataset_save(const struct InvoptDataset *ds, const char *path);

// Number of observations.
//
// # Safety
// `ds` must be a live handle.
size_t invopt_dataset_len(const struct InvoptDataset *ds);

// Decision dimension.
//
// # Safety
// `ds` must be a live handle.
size_t invopt_dataset_dim(const struct InvoptDataset *ds);

// # Safety
// `ds` must come from this library and not be freed twice.
void invopt_dataset_free(struct InvoptDataset *ds);

// Runs the sampler matching `algorithm` (1 = decision-space, 2 =
// objective-space) with default priors. Returns null on failure.
//
// # Safety
// `ds` and `cfg` must be live pointers.
struct InvoptRun *invopt_run_chains(const struct InvoptDataset *ds,
                                    int algorithm,
                                    const struct InvoptChainConfig *cfg);

// Final maximum PSRF of the run.
//
// # Safety
// `run` must be a live handle.
double invopt_run_psrf(const struct InvoptRun *run);

// 1 when the PSRF threshold was met, 0 otherwise.
//
// # Safety
// `run` must be a live handle.
int invopt_run_converged(const struct InvoptRun *run);

// Iterations executed per chain.
//
// # Safety
// `run` must be a live handle.
size_t invopt_run_total_iters(const struct InvoptRun *run);

// Number of pooled post-warm-up samples.
//
// # Safety
// `run` must be a live handle.
size_t invopt_run_sample_count(const struct InvoptRun *run);

// Sample dimension.
//
// # Safety
// `run` must be a live handle.
size_t invopt_run_dim(const struct InvoptRun *run);

// Copies pooled samples row-major into `out` (`sample_count * dim`
// doubles).
//
// # Safety
// `run` must be live; `out` must point to `cap` writable doubles.
int invopt_run_copy_samples(const struct InvoptRun *run, double *out, size_t cap);

// Root mean squared angular deviation of the pooled samples, radians.
// Returns NaN on failure.
//
// # Safety
// `run` must be a live handle.
double invopt_run_alpha_rms(const struct InvoptRun *run);

// # Safety
// `run` must come from this library and not be freed twice.
void invopt_run_free(struct InvoptRun *run);

// Fits the `(1 - alpha)` credible region from a run's pooled samples.
// Pass `epsilon <= 0` for the scale-relative default regularizer.
//
// # Safety
// `run` must be a live handle.
struct InvoptRegion *invopt_region_fit(const struct InvoptRun *run, double alpha, double epsilon);

// Loads a region JSON file.
//
// # Safety
// `path` must be a NUL-terminated string.
struct InvoptRegion *invopt_region_load(const char *path);

// Saves a region as JSON.
//
// # Safety
// `region` must be live; `path` a NUL-terminated string.
int invopt_region_save(const struct InvoptRegion *region, const char *path);

// Region dimension.
//
// # Safety
// `region` must be a live handle.
size_t invopt_region_dim(const struct InvoptRegion *region);

// Membership test: 1 inside, 0 outside, negative on error. `theta` is
// normalized before testing.
//
// # Safety
// `region` must be live; `theta` must point to `len` doubles.
int invopt_region_contains(const struct InvoptRegion *region, const double *theta, size_t len);

// # Safety
// `region` must come from this library and not be freed twice.
void invopt_region_free(struct InvoptRegion *region);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* INVOPT_H */
