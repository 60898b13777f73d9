#ifndef LOGDET_PRECOND_H
#define LOGDET_PRECOND_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum LdpStatus {
  LDP_STATUS_OK = 0,
  LDP_STATUS_NULL_POINTER = 1,
  LDP_STATUS_INVALID_ARGUMENT = 2,
  LDP_STATUS_DIMENSION_MISMATCH = 3,
  LDP_STATUS_NOT_POSITIVE_DEFINITE = 4,
  LDP_STATUS_BREAKDOWN = 5,
  LDP_STATUS_DOMAIN = 6,
  LDP_STATUS_NO_CONVERGENCE = 7,
  LDP_STATUS_IO = 8,
  LDP_STATUS_PARSE = 9,
  LDP_STATUS_UNSUPPORTED = 10,
  LDP_STATUS_CAP_EXCEEDED = 11,
  LDP_STATUS_INDEFINITE_PRECONDITIONER = 12,
  LDP_STATUS_PANIC = 13,
} LdpStatus;

typedef enum LdpRule {
  LDP_RULE_BLD = 0,
  LDP_RULE_RBLD = 1,
  LDP_RULE_TSVD = 2,
} LdpRule;

typedef enum LdpStopReason {
  LDP_STOP_REASON_CONVERGED = 0,
  LDP_STOP_REASON_MAX_ITERATIONS = 1,
  LDP_STOP_REASON_STAGNATION = 2,
} LdpStopReason;

/**
 * Incomplete Cholesky factor handle.
 */
typedef struct LdpFactor LdpFactor;

/**
 * Sparse symmetric matrix handle.
 */
typedef struct LdpMatrix LdpMatrix;

/**
 * Preconditioner handle.
 */
typedef struct LdpPreconditioner LdpPreconditioner;

/**
 * Summary of one PCG run.
 */
typedef struct LdpSolveReport {
  bool converged;
  enum LdpStopReason reason;
  size_t iterations;
  /**
   * True relative residual at termination.
   */
  double final_rel_residual;
  size_t matvecs;
  bool residual_gap;
  double time_solve_s;
} LdpSolveReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ldp_version(void);

/**
 * Message of the last failed call on this thread, or an empty string.
 * Valid until the next library call on the same thread.
 */
const char *ldp_last_error_message(void);

/**
 * Builds a matrix from CSR arrays. `row_ptr` has `n_rows + 1` entries and
 * `row_ptr[n_rows]` is the number of stored entries.
 *
 * # Safety
 * Array pointers must be valid for the lengths implied above.
 */
enum LdpStatus ldp_matrix_from_csr(size_t n_rows,
                                   size_t n_cols,
                                   const size_t *row_ptr,
                                   const size_t *col_idx,
                                   const double *values,
                                   struct LdpMatrix **out);

/**
 * Reads a Matrix Market file.
 *
 * # Safety
 * `path` must be a NUL-terminated string.
 */
enum LdpStatus ldp_matrix_read_mtx(const char *path, struct LdpMatrix **out);

/**
 * # Safety
 * `m` must be a live handle or null.
 */
size_t ldp_matrix_n_rows(const struct LdpMatrix *m);

/**
 * # Safety
 * `m` must be a live handle or null.
 */
size_t ldp_matrix_nnz(const struct LdpMatrix *m);

/**
 * # Safety
 * `m` must come from this library and not be freed twice.
 */
void ldp_matrix_free(struct LdpMatrix *m);

/**
 * Zero-fill incomplete Cholesky of `S + diag_shift * diag(S)`.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum LdpStatus ldp_ic0(const struct LdpMatrix *m, double diag_shift, struct LdpFactor **out);

/**
 * # Safety
 * `f` must come from this library and not be freed twice.
 */
void ldp_factor_free(struct LdpFactor *f);

/**
 * # Safety
 * `out` must be writable.
 */
enum LdpStatus ldp_precond_identity(size_t n, struct LdpPreconditioner **out);

/**
 * `P = Q Q^T`.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum LdpStatus ldp_precond_factor_only(const struct LdpFactor *q, struct LdpPreconditioner **out);

/**
 * Exact rank-`r` truncation of the scaled error by `rule`; densifies.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum LdpStatus ldp_precond_exact(const struct LdpMatrix *s,
                                 const struct LdpFactor *q,
                                 size_t r,
                                 enum LdpRule rule,
                                 struct LdpPreconditioner **out);

/**
 * Split-rank approximation: `floor(alpha r)` largest and the rest smallest
 * eigenpairs of the scaled error. `krylov_positive` selects Lanczos for the
 * positive part instead of Nystrom. `s_matvecs` may be null.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum LdpStatus ldp_precond_alpha(const struct LdpMatrix *s,
                                 const struct LdpFactor *q,
                                 size_t r,
                                 double alpha,
                                 bool krylov_positive,
                                 uint64_t seed,
                                 struct LdpPreconditioner **out,
                                 size_t *s_matvecs);

/**
 * Nystrom (`indefinite = false`) or indefinite Nystrom approximation.
 *
 * # Safety
 * Handles must be live; `out` must be writable. `s_matvecs` may be null.
 */
enum LdpStatus ldp_precond_randomized(const struct LdpMatrix *s,
                                      const struct LdpFactor *q,
                                      size_t r,
                                      bool indefinite,
                                      uint64_t seed,
                                      struct LdpPreconditioner **out,
                                      size_t *s_matvecs);

/**
 * # Safety
 * `p` must be a live handle or null.
 */
size_t ldp_precond_rank(const struct LdpPreconditioner *p);

/**
 * `out = P^-1 v`, both of length `n`.
 *
 * # Safety
 * `v` and `out` must hold `n` doubles.
 */
enum LdpStatus ldp_precond_apply_inverse(const struct LdpPreconditioner *p,
                                         const double *v,
                                         double *out,
                                         size_t n);

/**
 * # Safety
 * `p` must come from this library and not be freed twice.
 */
void ldp_precond_free(struct LdpPreconditioner *p);

/**
 * PCG from a zero initial guess. `x` receives the iterate; `report` may be
 * null.
 *
 * # Safety
 * `b` and `x` must hold `n` doubles; handles must be live.
 */
enum LdpStatus ldp_pcg_solve(const struct LdpMatrix *s,
                             const struct LdpPreconditioner *p,
                             const double *b,
                             double *x,
                             size_t n,
                             double tol,
                             size_t maxit,
                             struct LdpSolveReport *report);

/**
 * `x - ln(1 + x)` for `x > -1`.
 *
 * # Safety
 * `out` must be writable.
 */
enum LdpStatus ldp_gamma(double x, double *out);

/**
 * `1 / (1 + x) + ln(1 + x) - 1` for `x > -1`.
 *
 * # Safety
 * `out` must be writable.
 */
enum LdpStatus ldp_nu(double x, double *out);

/**
 * Log-determinant divergence of two dense `n x n` SPD matrices.
 *
 * # Safety
 * `x` and `y` must hold `n * n` doubles; `out` must be writable.
 */
enum LdpStatus ldp_divergence(const double *x, const double *y, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LOGDET_PRECOND_H */
