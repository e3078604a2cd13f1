#ifndef KAHLER_OT_H
#define KAHLER_OT_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum KotRoute {
  KOT_ROUTE_DIRECT = 0,
  KOT_ROUTE_POTENTIAL = 1,
  KOT_ROUTE_CURVATURE = 2,
} KotRoute;

typedef enum KotStatus {
  KOT_STATUS_OK = 0,
  KOT_STATUS_NULL_POINTER = 1,
  KOT_STATUS_INVALID_ARGUMENT = 2,
  // A point or pair lies outside the domain.
  KOT_STATUS_DOMAIN = 3,
  // Inversion, convergence or degeneracy failure.
  KOT_STATUS_NUMERICAL = 4,
  KOT_STATUS_NOT_ORTHOGONAL = 5,
  KOT_STATUS_PANIC = 6,
} KotStatus;

// Opaque cost handle.
typedef struct KotCost KotCost;

// Opaque potential handle.
typedef struct KotPotential KotPotential;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *kot_version(void);

// Message for the last failed call on this thread; empty if none. Valid
// until the next failing call on the same thread.
const char *kot_last_error(void);

// Parse `catalog:<name>[:k=v,...]` or `expr:<expression>`.
//
// `spec` must be a NUL-terminated string and `out` a writable pointer.
enum KotStatus kot_potential_new(const char *spec, struct KotPotential **out);

// `p` must come from `kot_potential_new` and not be freed twice. Null is ignored.
void kot_potential_free(struct KotPotential *p);

// Dimension of the potential's domain; 0 for a null handle.
//
// `p` must be null or a live handle.
size_t kot_potential_dim(const struct KotPotential *p);

// Value and derivatives at `point` (length n). `grad` holds n values,
// `hess` n², `d3` n³ and `d4` n⁴; `d3` and `d4` may be null.
//
// All non-null pointers must be valid for the stated lengths.
enum KotStatus kot_eval_bundle(const struct KotPotential *p,
                               const double *point,
                               size_t n,
                               double *value,
                               double *grad,
                               double *hess,
                               double *d3,
                               double *d4);

// MTW tensor of the cost Ψ(x − y) at z = x − y, by the chosen route.
//
// `z`, `xi`, `eta` hold n values; `out` is writable.
enum KotStatus kot_mtw(const struct KotPotential *p,
                       enum KotRoute route,
                       const double *z,
                       const double *xi,
                       const double *eta,
                       size_t n,
                       double *out);

// Anti-bisectional curvature at `point`. With `orthogonal` set, pairs with
// η(ξ) ≠ 0 are rejected with `NotOrthogonal`.
//
// `point`, `xi`, `eta` hold n values; `out` is writable.
enum KotStatus kot_anti_bisectional(const struct KotPotential *p,
                                    const double *point,
                                    const double *xi,
                                    const double *eta,
                                    size_t n,
                                    bool orthogonal,
                                    double *out);

// Holomorphic sectional curvature of ξ at `point`.
//
// `point`, `xi` hold n values; `out` is writable.
enum KotStatus kot_holomorphic_sectional(const struct KotPotential *p,
                                         const double *point,
                                         const double *xi,
                                         size_t n,
                                         double *out);

// θ = ∇Ψ(u).
//
// `u` and `theta` hold n values.
enum KotStatus kot_to_dual(const struct KotPotential *p, const double *u, size_t n, double *theta);

// u with ∇Ψ(u) = θ. `guess` may be null for the default starting point.
//
// `theta`, `u` and a non-null `guess` hold n values.
enum KotStatus kot_from_dual(const struct KotPotential *p,
                             const double *theta,
                             const double *guess,
                             size_t n,
                             double *u);

// c-exponential: y with −c_x(x, y) = momentum for c = Ψ(x − y).
//
// `x`, `momentum` and `y` hold n values.
enum KotStatus kot_c_exp(const struct KotPotential *p,
                         const double *x,
                         const double *momentum,
                         size_t n,
                         double *y);

// Parse a cost: `psi:<potential>`, `d-alpha:<alpha>:<potential>`,
// `log-cost[:n]`, `ecf[:n]` or `raw:<expr>`. `dim` fills in an omitted
// dimension (coordinates per point); pass 0 for none.
//
// `spec` must be a NUL-terminated string and `out` writable.
enum KotStatus kot_cost_new(const char *spec, size_t dim, struct KotCost **out);

// `c` must come from `kot_cost_new` and not be freed twice. Null is ignored.
void kot_cost_free(struct KotCost *c);

// Coordinates per point expected by the cost; 0 for a null handle.
//
// `c` must be null or a live handle.
size_t kot_cost_point_dim(const struct KotCost *c);

// C_ij = c(x_i, y_j) for `m` points `xs` and `k` points `ys` of dimension
// `d`; `out` receives m·k values.
//
// `xs` holds m·d values, `ys` k·d, `out` m·k.
enum KotStatus kot_cost_matrix(const struct KotCost *c,
                               const double *xs,
                               size_t m,
                               const double *ys,
                               size_t k,
                               size_t d,
                               double *out);

// Exact optimal coupling for masses `mu` (m) and `nu` (k) under the
// row-major cost matrix `c` (m·k). `plan` receives m·k values and `cost`
// the total cost.
//
// Pointers must be valid for the stated lengths; `cost` may be null.
enum KotStatus kot_solve_exact(const double *c,
                               const double *mu,
                               size_t m,
                               const double *nu,
                               size_t k,
                               double *plan,
                               double *cost);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KAHLER_OT_H */
