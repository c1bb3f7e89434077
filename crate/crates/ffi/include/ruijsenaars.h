#ifndef RUIJSENAARS_H
#define RUIJSENAARS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum RjStatus {
  RJ_STATUS_OK = 0,
  RJ_STATUS_NULL_POINTER = 1,
  RJ_STATUS_INVALID_UTF8 = 2,
  RJ_STATUS_DOMAIN = 3,
  RJ_STATUS_POLE = 4,
  RJ_STATUS_DIVERGENT = 5,
  RJ_STATUS_DIMENSION = 6,
  RJ_STATUS_INEXACT_DIVISION = 7,
  RJ_STATUS_DEGENERATE = 8,
  RJ_STATUS_COLLISION = 9,
  RJ_STATUS_PARAM = 10,
  RJ_STATUS_UNSATISFIABLE = 11,
  RJ_STATUS_CONFIG = 12,
  RJ_STATUS_SERIALIZATION = 13,
  RJ_STATUS_PANIC = 14,
} RjStatus;

/**
 * Class of the function `[u]`.
 */
typedef enum RjFamilyKind {
  RJ_FAMILY_KIND_RATIONAL = 0,
  RJ_FAMILY_KIND_TRIG = 1,
  RJ_FAMILY_KIND_ELLIPTIC = 2,
} RjFamilyKind;

/**
 * Kernel functions.
 */
typedef enum RjKernel {
  RJ_KERNEL_PHI_A = 0,
  RJ_KERNEL_PSI_A = 1,
  RJ_KERNEL_PHI_BC_RATIO = 2,
  RJ_KERNEL_PHI_BC_PRODUCT = 3,
  RJ_KERNEL_PSI_BC = 4,
  RJ_KERNEL_PHI0 = 5,
  RJ_KERNEL_PHI_INF = 6,
  RJ_KERNEL_PHI_PLUS = 7,
  RJ_KERNEL_PHI_MINUS = 8,
} RjKernel;

/**
 * Interpolation families.
 */
typedef enum RjInterp {
  RJ_INTERP_COLUMN_E = 0,
  RJ_INTERP_ROW_H = 1,
} RjInterp;

/**
 * Opaque handle to a configured `[u]`.
 */
typedef struct RjFamily RjFamily;

/**
 * Opaque handle to an exact Koornwinder polynomial.
 */
typedef struct RjPoly RjPoly;

/**
 * A complex number.
 */
typedef struct RjComplex {
  double re;
  double im;
} RjComplex;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next call into the library from the same thread.
 */
const char *rj_last_error(void);

/**
 * Release a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void rj_string_free(char *s);

/**
 * Build a family from explicit periods. `omega2` is ignored unless the
 * kind is elliptic; `omega1` is ignored for the rational kind.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum RjStatus rj_family_new(enum RjFamilyKind kind,
                            struct RjComplex omega1,
                            struct RjComplex omega2,
                            size_t max_terms,
                            double term_tol,
                            struct RjFamily **out);

/**
 * The family of the given kind with the built-in default periods.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum RjStatus rj_family_default(enum RjFamilyKind kind, struct RjFamily **out);

/**
 * Release a family. Null is ignored.
 *
 * # Safety
 * `fam` must come from this library and not have been freed.
 */
void rj_family_free(struct RjFamily *fam);

/**
 * Nome `p` of an elliptic family; zero otherwise.
 *
 * # Safety
 * `fam` and `out` must be valid pointers.
 */
enum RjStatus rj_family_nome(const struct RjFamily *fam, struct RjComplex *out);

/**
 * Evaluate `[u]`.
 *
 * # Safety
 * `fam` and `out` must be valid pointers.
 */
enum RjStatus rj_sigma(const struct RjFamily *fam, struct RjComplex u, struct RjComplex *out);

/**
 * Evaluate a kernel at `x` (length `m`) and `y` (length `n`). `v` is used
 * by the type-A kernels only.
 *
 * # Safety
 * `fam` and `out` must be valid; `x` and `y` must point to `m` and `n`
 * values (or be null when the length is zero).
 */
enum RjStatus rj_kernel(const struct RjFamily *fam,
                        enum RjKernel kernel,
                        struct RjComplex delta,
                        struct RjComplex kappa,
                        struct RjComplex v,
                        const struct RjComplex *x,
                        size_t m,
                        const struct RjComplex *y,
                        size_t n,
                        struct RjComplex *out);

/**
 * Run identity checks and return the reports as a JSON array.
 *
 * `ids` is a comma-separated list of identity names, or null for every
 * identity valid for the family. A negative `m` selects each identity's
 * default sizes; otherwise `(m, n)` is used. `config_toml` is an optional
 * overlay on the defaults.
 *
 * # Safety
 * String arguments must be null or NUL-terminated; `out_json` must be valid.
 */
enum RjStatus rj_verify(enum RjFamilyKind kind,
                        const char *ids,
                        int64_t m,
                        int64_t n,
                        const char *config_toml,
                        char **out_json);

/**
 * Compute the Koornwinder polynomial of the partition `parts` (length
 * `len`, weakly decreasing) in `m` variables. `config_toml` may override
 * the exact parameters; on an eigenvalue collision the parameters are
 * perturbed and retried.
 *
 * # Safety
 * `parts` must point to `len` values; `out` must be valid.
 */
enum RjStatus rj_koornwinder(const uint32_t *parts,
                             size_t len,
                             size_t m,
                             const char *config_toml,
                             struct RjPoly **out);

/**
 * Release a polynomial. Null is ignored.
 *
 * # Safety
 * `poly` must come from this library and not have been freed.
 */
void rj_poly_free(struct RjPoly *poly);

/**
 * Number of monomials.
 *
 * # Safety
 * `poly` and `out` must be valid pointers.
 */
enum RjStatus rj_poly_len(const struct RjPoly *poly, size_t *out);

/**
 * Evaluate at `x_1..x_m`.
 *
 * # Safety
 * `poly` and `out` must be valid; `x` must point to `len` values.
 */
enum RjStatus rj_poly_eval(const struct RjPoly *poly,
                           const struct RjComplex *x,
                           size_t len,
                           struct RjComplex *out);

/**
 * The polynomial, its eigenvalue and the parameters used, as JSON.
 *
 * # Safety
 * `poly` and `out_json` must be valid pointers.
 */
enum RjStatus rj_poly_json(const struct RjPoly *poly, char **out_json);

/**
 * Run the interpolation checks for `m` variables and return the report as
 * JSON. `passed` receives whether every check held.
 *
 * # Safety
 * `config_toml` must be null or NUL-terminated; `passed` and `out_json`
 * must be valid.
 */
enum RjStatus rj_interp(enum RjInterp kind,
                        size_t m,
                        const char *config_toml,
                        bool *passed,
                        char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RUIJSENAARS_H */
