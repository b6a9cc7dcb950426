#ifndef PA_CONTRACTS_H
#define PA_CONTRACTS_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PacStatus {
  PAC_STATUS_OK = 0,
  PAC_STATUS_NULL_POINTER = 1,
  PAC_STATUS_INVALID_ARGUMENT = 2,
  PAC_STATUS_INVALID_MODEL = 3,
  PAC_STATUS_CONFIG = 4,
  PAC_STATUS_NUMERICAL = 5,
  PAC_STATUS_UNSUPPORTED = 6,
  PAC_STATUS_BUFFER_TOO_SMALL = 7,
  PAC_STATUS_IO = 8,
  PAC_STATUS_PANIC = 99,
} PacStatus;

/**
 * Contract kinds accepted as `uint32_t` arguments.
 */
typedef enum PacContract {
  PAC_CONTRACT_FIRST_BEST = 0,
  PAC_CONTRACT_SECOND_BEST = 1,
  PAC_CONTRACT_ZERO = 2,
} PacContract;

/**
 * Simulation formulations accepted as `uint32_t` arguments.
 */
typedef enum PacFormulation {
  PAC_FORMULATION_STRONG = 0,
  PAC_FORMULATION_WEAK = 1,
} PacFormulation;

/**
 * Opaque first-best solution handle.
 */
typedef struct PacFirstBest PacFirstBest;

/**
 * Opaque model handle.
 */
typedef struct PacModel PacModel;

/**
 * Opaque second-best solution handle.
 */
typedef struct PacSecondBest PacSecondBest;

/**
 * Two-agent benchmark; `cost_coeffs` is row-major `[k11, k12, k21, k22]`.
 */
typedef struct PacBenchmark {
  double cost_coeffs[4];
  double sigmas[2];
  double gammas[2];
  double agent_risk_aversions[2];
  double principal_risk_aversion;
  double horizon;
  double reservation_utilities[2];
} PacBenchmark;

typedef struct PacSimOptions {
  size_t n_paths;
  size_t n_steps;
  uint64_t seed;
} PacSimOptions;

typedef struct PacEstimate {
  double mean;
  double std_error;
  /**
   * Paths whose exponent had to be clipped; a nonzero count voids the estimate.
   */
  uint64_t clipped;
} PacEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *pac_version(void);

/**
 * Length in bytes of the last error message on this thread, without the
 * terminating NUL; 0 when the last call succeeded.
 */
size_t pac_last_error_length(void);

/**
 * Copies the last error message (NUL-terminated) into `buf`. Returns the
 * number of bytes written excluding the NUL, or -1 if `buf` is too small.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
ptrdiff_t pac_last_error_message(char *buf, size_t len);

/**
 * Fills `out` with the default benchmark parameters.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum PacStatus pac_benchmark_default(struct PacBenchmark *out);

/**
 * Builds the two-agent benchmark model.
 *
 * # Safety
 * `params` must be null or valid for reads; `out` null or valid for writes.
 */
enum PacStatus pac_model_benchmark(const struct PacBenchmark *params, struct PacModel **out);

/**
 * Builds a model from a TOML document (a `[model]` or `[lq_benchmark]` section).
 *
 * # Safety
 * `toml` must be null or a NUL-terminated string; `out` null or valid for writes.
 */
enum PacStatus pac_model_from_toml(const char *toml, struct PacModel **out);

/**
 * # Safety
 * `model` must be null or a handle from this library, not yet freed.
 */
void pac_model_free(struct PacModel *model);

/**
 * # Safety
 * `model` and `out` must be null or valid.
 */
enum PacStatus pac_model_n_agents(const struct PacModel *model, size_t *out);

/**
 * # Safety
 * `model` and `out` must be null or valid.
 */
enum PacStatus pac_first_best_solve(const struct PacModel *model, struct PacFirstBest **out);

/**
 * # Safety
 * `fb` must be null or a handle from this library, not yet freed.
 */
void pac_first_best_free(struct PacFirstBest *fb);

/**
 * # Safety
 * `fb` and `out` must be null or valid.
 */
enum PacStatus pac_first_best_principal_value(const struct PacFirstBest *fb, double *out);

/**
 * # Safety
 * `fb` and `out` must be null or valid.
 */
enum PacStatus pac_first_best_n_pieces(const struct PacFirstBest *fb, size_t *out);

/**
 * Effort on piece `k`, `N×N` column-major.
 *
 * # Safety
 * `out` must be null or point to `len` writable doubles.
 */
enum PacStatus pac_first_best_effort(const struct PacFirstBest *fb,
                                     size_t k,
                                     double *out,
                                     size_t len);

/**
 * Participation multipliers, length `N`.
 *
 * # Safety
 * `out` must be null or point to `len` writable doubles.
 */
enum PacStatus pac_first_best_multipliers(const struct PacFirstBest *fb, double *out, size_t len);

/**
 * Affine contract `ξ_i = c_i + w_i·X_T`: constants (length `N`) and the
 * coefficient matrix whose column `i` is `w_i` (`N×N`, column-major).
 *
 * # Safety
 * `constants` must point to `n_constants` and `coefficients` to
 * `n_coefficients` writable doubles.
 */
enum PacStatus pac_first_best_contract(const struct PacFirstBest *fb,
                                       double *constants,
                                       size_t n_constants,
                                       double *coefficients,
                                       size_t n_coefficients);

/**
 * # Safety
 * `model` and `out` must be null or valid.
 */
enum PacStatus pac_second_best_solve(const struct PacModel *model, struct PacSecondBest **out);

/**
 * # Safety
 * `sb` must be null or a handle from this library, not yet freed.
 */
void pac_second_best_free(struct PacSecondBest *sb);

/**
 * # Safety
 * `sb` and `out` must be null or valid.
 */
enum PacStatus pac_second_best_principal_value(const struct PacSecondBest *sb, double *out);

/**
 * # Safety
 * `sb` and `out` must be null or valid.
 */
enum PacStatus pac_second_best_n_pieces(const struct PacSecondBest *sb, size_t *out);

/**
 * Whether every optimal sensitivity passed its local optimality certificate.
 *
 * # Safety
 * `sb` and `out` must be null or valid.
 */
enum PacStatus pac_second_best_certified(const struct PacSecondBest *sb, bool *out);

/**
 * Optimal sensitivities on piece `k`, `N×N` column-major.
 *
 * # Safety
 * `out` must be null or point to `len` writable doubles.
 */
enum PacStatus pac_second_best_z(const struct PacSecondBest *sb, size_t k, double *out, size_t len);

/**
 * Induced effort on piece `k`, `N×N` column-major.
 *
 * # Safety
 * `out` must be null or point to `len` writable doubles.
 */
enum PacStatus pac_second_best_effort(const struct PacSecondBest *sb,
                                      size_t k,
                                      double *out,
                                      size_t len);

/**
 * Initial continuation values, length `N`.
 *
 * # Safety
 * `out` must be null or point to `len` writable doubles.
 */
enum PacStatus pac_second_best_y0(const struct PacSecondBest *sb, double *out, size_t len);

/**
 * # Safety
 * `out` must be null or point to `len` writable doubles.
 */
enum PacStatus pac_second_best_multipliers(const struct PacSecondBest *sb, double *out, size_t len);

/**
 * Monte Carlo expected utilities under `contract` and the effort it
 * implements. `agents` receives `N` estimates.
 *
 * # Safety
 * `agents` must point to `n_agents` writable estimates, `principal` to one.
 */
enum PacStatus pac_simulate(const struct PacModel *model,
                            uint32_t contract,
                            uint32_t formulation,
                            const struct PacSimOptions *options,
                            struct PacEstimate *agents,
                            size_t n_agents,
                            struct PacEstimate *principal);

/**
 * Participation, Nash, martingale and ordering checks for the first- or
 * second-best contract. `passed` receives the overall verdict.
 *
 * # Safety
 * `model`, `options` and `passed` must be null or valid.
 */
enum PacStatus pac_verify(const struct PacModel *model,
                          uint32_t contract,
                          const struct PacSimOptions *options,
                          bool *passed);

/**
 * Runs a command-line command on a TOML configuration (null for the default
 * benchmark) and returns the concatenated CSV output in `*out`, to be
 * released with [`pac_string_free`].
 *
 * # Safety
 * `command` must be a NUL-terminated string, `toml` null or one, and `out`
 * valid for writes.
 */
enum PacStatus pac_run(const char *command, const char *toml, char **out);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void pac_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PA_CONTRACTS_H */
