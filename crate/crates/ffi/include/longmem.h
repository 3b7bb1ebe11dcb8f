#ifndef LONGMEM_H
#define LONGMEM_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result of every fallible call.
 */
typedef enum LmStatus {
  LM_STATUS_OK = 0,
  LM_STATUS_NULL_POINTER = 1,
  LM_STATUS_INVALID_ARGUMENT = 2,
  LM_STATUS_DOMAIN = 3,
  LM_STATUS_BREAKDOWN = 4,
  LM_STATUS_NUMERICAL = 5,
  LM_STATUS_IO = 6,
  LM_STATUS_PANIC = 7,
} LmStatus;

/*
 Opaque sampler output.
 */
typedef struct LmChain LmChain;

/*
 Opaque FEXP model.
 */
typedef struct LmModel LmModel;

/*
 Opaque prior specification.
 */
typedef struct LmPrior LmPrior;

/*
 Opaque observed series.
 */
typedef struct LmSeries LmSeries;

/*
 Finite-`n` and limiting divergences between two models.
 */
typedef struct LmDivergences {
  double kl_n;
  double kl_inf;
  double h_n;
  double h;
  double b_n;
  double b;
  double ell;
} LmDivergences;

/*
 Sampler settings; see [`lm_mcmc_default`].
 */
typedef struct LmMcmcConfig {
  uintptr_t iterations;
  uintptr_t burn_in;
  uintptr_t thin;
  double step_d;
  double step_theta;
  double birth_rate;
  uint64_t seed;
  uintptr_t k_max;
} LmMcmcConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Copies the last error message of this thread into `buf` (NUL-terminated,
 truncated to `len`). Returns the full message length, or 0 if none.

 # Safety
 `buf` must be null or valid for `len` bytes.
 */
uintptr_t lm_last_error_message(char *buf, uintptr_t len);

/*
 Library version as a static NUL-terminated string.
 */
const char *lm_version(void);

/*
 Builds `FEXP(d; θ_0..θ_{len-1})`.

 # Safety
 `theta` must be valid for `len` reads; `out_model` must be writable.
 */
enum LmStatus lm_model_new(double d,
                           const double *theta,
                           uintptr_t len,
                           struct LmModel **out_model);

/*
 # Safety
 `model` must come from this library and not be used afterwards.
 */
void lm_model_free(struct LmModel *model);

/*
 Memory parameter `d` of a model.

 # Safety
 Pointers must be valid.
 */
enum LmStatus lm_model_d(const struct LmModel *model, double *out_d);

/*
 Truncation order `k`; the model holds `k + 1` coefficients.

 # Safety
 Pointers must be valid.
 */
enum LmStatus lm_model_k(const struct LmModel *model, uintptr_t *out_k);

/*
 Copies up to `len` coefficients into `theta`.

 # Safety
 `theta` must be valid for `len` writes.
 */
enum LmStatus lm_model_theta(const struct LmModel *model, double *theta, uintptr_t len);

/*
 Spectral density `f(λ)`, `|λ| ≤ π`.

 # Safety
 Pointers must be valid.
 */
enum LmStatus lm_model_eval_f(const struct LmModel *model, double lambda, double *out_f);

/*
 Autocovariances `γ(0..n-1)` into `gamma`.

 # Safety
 `gamma` must be valid for `n` writes.
 */
enum LmStatus lm_autocov(const struct LmModel *model, uintptr_t n, double *gamma);

/*
 # Safety
 `x` must be valid for `n` reads; `out_series` must be writable.
 */
enum LmStatus lm_series_new(const double *x, uintptr_t n, struct LmSeries **out_series);

/*
 # Safety
 `series` must come from this library and not be used afterwards.
 */
void lm_series_free(struct LmSeries *series);

/*
 Exact Gaussian log-likelihood.

 # Safety
 Pointers must be valid.
 */
enum LmStatus lm_exact_loglik(const struct LmSeries *series,
                              const struct LmModel *model,
                              double *out_ll);

/*
 Whittle log-likelihood without additive constants.

 # Safety
 Pointers must be valid.
 */
enum LmStatus lm_whittle_loglik(const struct LmSeries *series,
                                const struct LmModel *model,
                                double *out_ll);

/*
 All divergences of `f` from the reference `f0` at dimension `n`.

 # Safety
 Pointers must be valid.
 */
enum LmStatus lm_divergences(const struct LmModel *f0,
                             const struct LmModel *f,
                             uintptr_t n,
                             struct LmDivergences *out_report);

/*
 Draws `replicates` exact paths of length `n` into `paths`, replicate-major
 (`paths[r * n + t]`).

 # Safety
 `paths` must be valid for `n * replicates` writes.
 */
enum LmStatus lm_simulate(const struct LmModel *model,
                          uintptr_t n,
                          uintptr_t replicates,
                          uint64_t seed,
                          double *paths);

/*
 Default prior: truncated Gaussian with `t = 0.05`, `β = 1.5`, `L = 4`,
 `k ~ Poisson(2)`, `τ0 = 1`.

 # Safety
 `out_prior` must be writable.
 */
enum LmStatus lm_prior_default(struct LmPrior **out_prior);

/*
 Parses the `[prior]` table of a TOML document.

 # Safety
 `toml` must be a NUL-terminated string.
 */
enum LmStatus lm_prior_from_toml(const char *toml, struct LmPrior **out_prior);

/*
 # Safety
 `prior` must come from this library and not be used afterwards.
 */
void lm_prior_free(struct LmPrior *prior);

/*
 Log prior density; `-inf` outside the support.

 # Safety
 Pointers must be valid.
 */
enum LmStatus lm_prior_log_density(const struct LmPrior *prior,
                                   const struct LmModel *model,
                                   double *out_lp);

/*
 Default sampler settings.
 */
struct LmMcmcConfig lm_mcmc_default(void);

/*
 Runs the sampler.

 # Safety
 Pointers must be valid; `out_chain` must be writable.
 */
enum LmStatus lm_fit(const struct LmSeries *series,
                     const struct LmPrior *prior,
                     const struct LmMcmcConfig *config,
                     struct LmChain **out_chain);

/*
 # Safety
 `chain` must come from this library and not be used afterwards.
 */
void lm_chain_free(struct LmChain *chain);

/*
 Number of retained draws.

 # Safety
 Pointers must be valid.
 */
enum LmStatus lm_chain_len(const struct LmChain *chain, uintptr_t *out_len);

/*
 Posterior mean of `d`.

 # Safety
 Pointers must be valid.
 */
enum LmStatus lm_chain_estimate_d(const struct LmChain *chain, double *out_d);

/*
 Posterior-mean model `FEXP(d̂, θ̄)`; free with [`lm_model_free`].

 # Safety
 Pointers must be valid.
 */
enum LmStatus lm_chain_posterior_mean(const struct LmChain *chain, struct LmModel **out_model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LONGMEM_H */
