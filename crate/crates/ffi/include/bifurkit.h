#ifndef BIFURKIT_H
#define BIFURKIT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BkStatus {
  BkStatus_Ok = 0,
  BkStatus_NullPointer = 1,
  BkStatus_InvalidUtf8 = 2,
  BkStatus_InvalidArgument = 3,
  BkStatus_ConfigError = 4,
  BkStatus_NumericalFailure = 5,
  BkStatus_OutOfRange = 6,
  BkStatus_Panic = 7,
} BkStatus;

/**
 * Result of a local analysis at a singular point.
 */
typedef struct BkLocalReport BkLocalReport;

/**
 * A discretized problem.
 */
typedef struct BkProblem BkProblem;

/**
 * Generalized spectrum of a problem's trivial-branch linearization.
 */
typedef struct BkSpectrum BkSpectrum;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer stays valid
 * until the next failing call on the same thread.
 */
const char *bk_last_error_message(void);

/**
 * Builds a problem from a JSON problem description such as
 * `{"kind":"degenerate_1d","n":200}`.
 *
 * # Safety
 * `json` must be null or a valid NUL-terminated string; `out` must be null or a
 * valid pointer to writable storage for one handle pointer.
 */
enum BkStatus bk_problem_from_json(const char *json, struct BkProblem **out);

/**
 * The degenerate one-dimensional example on n interior points (n ≥ 50).
 *
 * # Safety
 * `out` must be null or a valid pointer to writable storage for one handle pointer.
 */
enum BkStatus bk_problem_degenerate_1d(size_t n, struct BkProblem **out);

/**
 * Number of unknowns, or 0 for a null handle.
 *
 * # Safety
 * `p` must be null or a handle returned by this library and not yet freed.
 */
size_t bk_problem_len(const struct BkProblem *p);

/**
 * # Safety
 * `p` must be null or a handle returned by this library and not yet freed.
 */
void bk_problem_free(struct BkProblem *p);

/**
 * Generalized spectrum of the linearization at u = 0 on (a, b).
 *
 * # Safety
 * `p` must be a live problem handle; `out` must be null or valid for one write.
 */
enum BkStatus bk_spectrum(const struct BkProblem *p, double a, double b, struct BkSpectrum **out);

/**
 * Number of eigenvalues, or 0 for a null handle.
 *
 * # Safety
 * `s` must be null or a live spectrum handle.
 */
size_t bk_spectrum_len(const struct BkSpectrum *s);

/**
 * The i-th eigenvalue (increasing order) and its multiplicity.
 *
 * # Safety
 * `s` must be a live spectrum handle; `lambda` and `chi` must be null or valid for one write.
 */
enum BkStatus bk_spectrum_get(const struct BkSpectrum *s, size_t i, double *lambda, size_t *chi);

/**
 * # Safety
 * `s` must be null or a spectrum handle not yet freed.
 */
void bk_spectrum_free(struct BkSpectrum *s);

/**
 * Algebraic multiplicity of the linearization at u = 0 at λ0.
 *
 * # Safety
 * `p` must be a live problem handle; `out` must be null or valid for one write.
 */
enum BkStatus bk_chi(const struct BkProblem *p, double lambda0, size_t *out);

/**
 * Local analysis at (λ0, u0). `u0` may be null with `len == 0` for the zero state.
 *
 * # Safety
 * `p` must be a live problem handle; `u0` must be null or point to `len` doubles;
 * `out` must be null or valid for one write.
 */
enum BkStatus bk_local_analysis(const struct BkProblem *p,
                                double lambda0,
                                const double *u0,
                                size_t len,
                                struct BkLocalReport **out);

/**
 * χ of a local report, or 0 for null.
 *
 * # Safety
 * `r` must be null or a live local report handle.
 */
size_t bk_local_chi(const struct BkLocalReport *r);

/**
 * Number of real half-branches, or 0 for null.
 *
 * # Safety
 * `r` must be null or a live local report handle.
 */
size_t bk_local_half_branch_count(const struct BkLocalReport *r);

/**
 * The full report as JSON; release the string with [`bk_string_free`].
 *
 * # Safety
 * `r` must be a live local report handle; `out` must be null or valid for one write.
 */
enum BkStatus bk_local_to_json(const struct BkLocalReport *r, char **out);

/**
 * # Safety
 * `r` must be null or a local report handle not yet freed.
 */
void bk_local_free(struct BkLocalReport *r);

/**
 * # Safety
 * `s` must be null or a string returned by this library and not yet freed.
 */
void bk_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BIFURKIT_H */
