#ifndef VACUA_H
#define VACUA_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum VacuaStatus {
  VACUA_STATUS_OK = 0,
  VACUA_STATUS_NULL_POINTER = 1,
  VACUA_STATUS_INVALID_ARGUMENT = 2,
  VACUA_STATUS_DOMAIN = 3,
  VACUA_STATUS_NO_CONVERGENCE = 4,
  VACUA_STATUS_HYPOTHESIS = 5,
  VACUA_STATUS_RESONANCE = 6,
  VACUA_STATUS_OUT_OF_RANGE = 7,
  VACUA_STATUS_SOLVER = 8,
  VACUA_STATUS_PANIC = 9,
} VacuaStatus;

/**
 * Opaque branch of rank-one bubbles.
 */
typedef struct VacuaBubbleBranch VacuaBubbleBranch;

/**
 * Opaque viscous steady state on `[-π, π]`.
 */
typedef struct VacuaViscousProfile VacuaViscousProfile;

/**
 * Rank-one vacuum bubble `(A₀ + A₁ cos x)₊` supported on `[-L, L]`.
 */
typedef struct VacuaBubble {
  double a0;
  double a1;
  double l;
  double rho;
  double mu;
} VacuaBubble;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the buffer size needed for the full message.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
uintptr_t vacua_last_error(char *buf, uintptr_t len);

/**
 * Principal branch of the Lambert W function, `x ≥ -1/e`.
 *
 * # Safety
 * `out` must be null or writable.
 */
enum VacuaStatus vacua_lambert_w0(double x, double *out);

/**
 * First-order viscous shift `μ₁(ρ)`, `0 < |ρ| < 1`.
 *
 * # Safety
 * `out` must be null or writable.
 */
enum VacuaStatus vacua_mu1(double rho, double *out);

/**
 * Leading-order support half-width `π - (3π²/2)^{1/3} μ^{1/3}`.
 *
 * # Safety
 * `out` must be null or writable.
 */
enum VacuaStatus vacua_asymptotic_l(double mu, double *out);

/**
 * Rank-one bubble at `μ > 0`.
 *
 * # Safety
 * `out` must be null or writable.
 */
enum VacuaStatus vacua_solve_bubble(double mu, struct VacuaBubble *out);

/**
 * Branch over `count ≥ 2` log-spaced `μ` in `[mu_min, mu_max]`.
 *
 * # Safety
 * `out` must be null or writable; the handle is released with
 * [`vacua_bubble_branch_free`].
 */
enum VacuaStatus vacua_bubble_sweep(double mu_min,
                                    double mu_max,
                                    uintptr_t count,
                                    struct VacuaBubbleBranch **out);

/**
 * Number of converged points (fewer than requested if the branch was truncated).
 *
 * # Safety
 * `h` must be null or a live handle.
 */
uintptr_t vacua_bubble_branch_len(const struct VacuaBubbleBranch *h);

/**
 * Point `i` of the branch.
 *
 * # Safety
 * `h` must be null or a live handle; `out` must be null or writable.
 */
enum VacuaStatus vacua_bubble_branch_get(const struct VacuaBubbleBranch *h,
                                         uintptr_t i,
                                         struct VacuaBubble *out);

/**
 * Least-squares fit `π - L = c μ^p` over the whole branch.
 *
 * # Safety
 * `h` must be null or a live handle; `c` and `p` must be null or writable.
 */
enum VacuaStatus vacua_bubble_branch_gap_fit(const struct VacuaBubbleBranch *h,
                                             double *c,
                                             double *p);

/**
 * # Safety
 * `h` must be null or a handle from [`vacua_bubble_sweep`] not yet freed.
 */
void vacua_bubble_branch_free(struct VacuaBubbleBranch *h);

/**
 * Viscous steady state of `δ - (1/π + μ) cos x` with cosine moment `ρπ`,
 * `0 < ρ < 2`, on an even grid of `n ≥ 256` points.
 *
 * # Safety
 * `out` must be null or writable; the handle is released with
 * [`vacua_viscous_profile_free`].
 */
enum VacuaStatus vacua_viscous_profile_new(double rho,
                                           double eps,
                                           uintptr_t n,
                                           struct VacuaViscousProfile **out);

/**
 * Number of stored samples (`n + 1`, both endpoints included).
 *
 * # Safety
 * `h` must be null or a live handle.
 */
uintptr_t vacua_viscous_profile_len(const struct VacuaViscousProfile *h);

/**
 * Copy grid and values into caller buffers of length `len`, which must equal
 * [`vacua_viscous_profile_len`]. Either buffer may be null.
 *
 * # Safety
 * Non-null buffers must hold `len` writable doubles.
 */
enum VacuaStatus vacua_viscous_profile_copy(const struct VacuaViscousProfile *h,
                                            double *x,
                                            double *u,
                                            uintptr_t len);

/**
 * Parameter `μ` selected by the constraint.
 *
 * # Safety
 * `h` must be null or a live handle; `out` must be null or writable.
 */
enum VacuaStatus vacua_viscous_profile_mu(const struct VacuaViscousProfile *h, double *out);

/**
 * # Safety
 * `h` must be null or a handle from [`vacua_viscous_profile_new`] not yet freed.
 */
void vacua_viscous_profile_free(struct VacuaViscousProfile *h);

/**
 * Roots of `det(a - πb(κ)) = 0` for Dirac weights `[[0.8, a12], [a12, 1]]` and
 * cosine amplitudes `[[-0.3, κ], [κ, -0.3]]`: joint clustering and segregation.
 *
 * # Safety
 * `jc` and `seg` must be null or writable.
 */
enum VacuaStatus vacua_two_species_critical_kappas(double a12, double *jc, double *seg);

/**
 * Bifurcation points of the same system detected at viscosities `eps1`, `eps2`
 * on an `n`-point grid and extrapolated to zero viscosity, in increasing order.
 * `out` receives up to `cap` values; `count` receives the number found.
 *
 * # Safety
 * `out` must be null or hold `cap` writable doubles; `count` must be null or writable.
 */
enum VacuaStatus vacua_two_species_bifurcations(double a12,
                                                double eps1,
                                                double eps2,
                                                uintptr_t n,
                                                double *out,
                                                uintptr_t cap,
                                                uintptr_t *count);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VACUA_H */
