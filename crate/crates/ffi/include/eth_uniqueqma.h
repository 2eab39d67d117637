#ifndef ETH_UNIQUEQMA_H
#define ETH_UNIQUEQMA_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EqStatus {
  EQ_STATUS_OK = 0,
  EQ_STATUS_NULL_POINTER = 1,
  EQ_STATUS_INVALID_ARGUMENT = 2,
  EQ_STATUS_DIMENSION_MISMATCH = 3,
  EQ_STATUS_CAP_EXCEEDED = 4,
  EQ_STATUS_PRECONDITION = 5,
  EQ_STATUS_NUMERICAL = 6,
  EQ_STATUS_IO = 7,
  EQ_STATUS_PANIC = 8,
} EqStatus;

/**
 * ETH amplitude data `f_{αβ}`, `μ^i_α`.
 */
typedef struct EqEnsemble EqEnsemble;

/**
 * Hamiltonian with a known eigendecomposition.
 */
typedef struct EqHamiltonian EqHamiltonian;

typedef struct EqPerronResult {
  double lambda;
  double lambda_second;
  double ratio;
  double restriction_residual;
  /**
   * Number of failed inequalities; 0 when every bound holds.
   */
  size_t violations;
} EqPerronResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *eq_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *eq_version(void);

/**
 * `sin(π L x) / (L sin(π x))`.
 */
double eq_sinc_l(double x, size_t l);

/**
 * Builds `V diag(values) V^dagger` with `V` Haar-random from `basis_seed`,
 * or the identity when `random_basis` is false.
 *
 * # Safety
 * `values` must point to `n` readable doubles and `out` must be writable.
 */
enum EqStatus eq_hamiltonian_from_spectrum(const double *values,
                                           size_t n,
                                           bool random_basis,
                                           uint64_t basis_seed,
                                           struct EqHamiltonian **out);

/**
 * # Safety
 * `h` must come from [`eq_hamiltonian_from_spectrum`] and not be freed twice.
 */
void eq_hamiltonian_free(struct EqHamiltonian *h);

/**
 * Hilbert-space dimension, or 0 for NULL.
 *
 * # Safety
 * `h` must be NULL or a live handle.
 */
size_t eq_hamiltonian_dim(const struct EqHamiltonian *h);

/**
 * Copies the ascending eigenvalues into `out[0..len]`; `len` must equal the dimension.
 *
 * # Safety
 * `h` must be a live handle and `out` must point to `len` writable doubles.
 */
enum EqStatus eq_hamiltonian_eigenvalues(const struct EqHamiltonian *h, double *out, size_t len);

/**
 * QPE weights `q_α` for grid size `l` and window `[e0 - delta, e0 + delta]`,
 * indexed like the ascending eigenvalues.
 *
 * # Safety
 * `h` must be a live handle and `out` must point to `len` writable doubles.
 */
enum EqStatus eq_q_weights(const struct EqHamiltonian *h,
                           size_t l,
                           double e0,
                           double delta,
                           double *out,
                           size_t len);

/**
 * Ensemble with window dimension `d`, `m` observables and amplitude `f`.
 * `uniform` selects `f_{αβ} = f`; otherwise entries are drawn in `[f, 1]`
 * from `seed`. Diagonal amplitudes are zero.
 *
 * # Safety
 * `out` must be writable.
 */
enum EqStatus eq_ensemble_new(size_t d,
                              size_t m,
                              double f,
                              bool uniform,
                              uint64_t seed,
                              struct EqEnsemble **out);

/**
 * # Safety
 * `e` must come from [`eq_ensemble_new`] and not be freed twice.
 */
void eq_ensemble_free(struct EqEnsemble *e);

/**
 * Leading eigenpair checks on `M_f = (f_{αβ}^2 / D)`.
 *
 * # Safety
 * `e` must be a live handle and `out` writable.
 */
enum EqStatus eq_perron_check(const struct EqEnsemble *e,
                              uint64_t seed,
                              struct EqPerronResult *out);

/**
 * Acceptance probability of the controlled-reflection verifier. `basis` is
 * an orthonormal `n x k` matrix in row-major order and `witness` a unit
 * vector of length `n`, both as interleaved (re, im) pairs.
 *
 * # Safety
 * `basis` must hold `2 n k` doubles, `witness` `2 n` doubles, `out` writable.
 */
enum EqStatus eq_simple_verifier(const double *basis,
                                 size_t n,
                                 size_t k,
                                 const double *witness,
                                 double *out);

/**
 * Runs the experiment described by a JSON config, writing reports under
 * `out_dir` (or the config's `out_dir` when NULL). `passed` receives
 * whether every criterion held; threshold failures still return `Ok`.
 *
 * # Safety
 * `config_json` must be a NUL-terminated string, `out_dir` NULL or one,
 * and `passed` writable.
 */
enum EqStatus eq_run_experiment_json(const char *config_json, const char *out_dir, bool *passed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ETH_UNIQUEQMA_H */
