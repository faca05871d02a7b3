#ifndef ROADFIELD_H
#define ROADFIELD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum RfStatus {
  RF_STATUS_OK = 0,
  RF_STATUS_NULL_POINTER = 1,
  RF_STATUS_INVALID_ARGUMENT = 2,
  RF_STATUS_CONFIG = 3,
  RF_STATUS_NOT_CONVERGED = 4,
  RF_STATUS_STRUCTURAL = 5,
  RF_STATUS_SINGULAR = 6,
  RF_STATUS_IO = 7,
  RF_STATUS_BUFFER_TOO_SMALL = 8,
  RF_STATUS_PANIC = 9,
} RfStatus;

typedef enum RfOperatorKind {
  // Road and field with the exchange condition.
  RF_OPERATOR_KIND_COUPLED = 0,
  // Field alone, reflecting at `y = 0`.
  RF_OPERATOR_KIND_NEUMANN = 1,
  // Field alone, absorbing road.
  RF_OPERATOR_KIND_ROBIN = 2,
} RfOperatorKind;

typedef enum RfVerdict {
  RF_VERDICT_PERSISTENCE = 0,
  RF_VERDICT_EXTINCTION = 1,
  RF_VERDICT_UNDETERMINED = 2,
} RfVerdict;

// Principal eigenpair.
typedef struct RfEigen RfEigen;

// Truncated rectangle `[-X, X] x [0, Y]` with spacing `h`.
typedef struct RfGrid RfGrid;

// Growth-rate profile.
typedef struct RfNiche RfNiche;

// Assembled discrete operator.
typedef struct RfOperator RfOperator;

// Model coefficients; `c` is the niche speed.
typedef struct RfParameters {
  double road_diffusion;
  double field_diffusion;
  double mu;
  double nu;
  double c;
} RfParameters;

// Domain exhaustion ladder with a fixed spacing `h`.
typedef struct RfExhaustConfig {
  double x0;
  double growth;
  double h;
  double stop_tol;
  uintptr_t max_steps;
  uintptr_t min_steps;
  double aspect;
  double eig_tol;
} RfExhaustConfig;

typedef struct RfExhaustion {
  double lambda_inf;
  uintptr_t rungs;
  bool converged;
  // Half-width of the last truncation.
  double half_width;
} RfExhaustion;

typedef struct RfSpeeds {
  double c_star;
  double c_star_upper;
  double bound;
  double bracket_width;
  bool provisional;
} RfSpeeds;

typedef struct RfClassification {
  enum RfVerdict verdict;
  double lambda;
  double t_end;
} RfClassification;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// The pointer stays valid until the next `rf_*` call on this thread.
const char *rf_last_error_message(void);

// Library version, a static NUL-terminated string.
const char *rf_version(void);

// Radial niche `m = -tanh(|(x, y)| - scale)`.
//
// # Safety
// `out` must be valid for writes.
enum RfStatus rf_niche_radial(double scale, struct RfNiche **out);

// Constant growth rate; `m0 >= 0` requires `homogeneous`.
//
// # Safety
// `out` must be valid for writes.
enum RfStatus rf_niche_constant(double m0, bool homogeneous, struct RfNiche **out);

// Bilinear table on the axes `xs` (length `nx`) and `ys` (length `ny`),
// `values[j * nx + i]` at `(xs[i], ys[j])`.
//
// # Safety
// The arrays must hold the stated number of elements; `out` must be valid
// for writes.
enum RfStatus rf_niche_tabulated(const double *xs,
                                 uintptr_t nx,
                                 const double *ys,
                                 uintptr_t ny,
                                 const double *values,
                                 bool clamp,
                                 struct RfNiche **out);

// Growth rate at `(x, y)`.
//
// # Safety
// `niche` must come from an `rf_niche_*` constructor; `m` must be valid
// for writes.
enum RfStatus rf_niche_eval(const struct RfNiche *niche, double x, double y, double *m);

// # Safety
// `niche` must be null or come from an `rf_niche_*` constructor, and must
// not be used afterwards.
void rf_niche_free(struct RfNiche *niche);

// # Safety
// `out` must be valid for writes.
enum RfStatus rf_grid_new(double half_width, double height, double h, struct RfGrid **out);

// Cell counts along `x` and `y`.
//
// # Safety
// `grid` must come from [`rf_grid_new`]; `nx` and `ny` must be valid for
// writes.
enum RfStatus rf_grid_dims(const struct RfGrid *grid, uintptr_t *nx, uintptr_t *ny);

// # Safety
// `grid` must be null or come from [`rf_grid_new`], and must not be used
// afterwards.
void rf_grid_free(struct RfGrid *grid);

// # Safety
// Pointers must be valid; `out` must be valid for writes.
enum RfStatus rf_operator_assemble(enum RfOperatorKind kind_,
                                   const struct RfGrid *grid,
                                   const struct RfParameters *parameters,
                                   const struct RfNiche *niche,
                                   struct RfOperator **out);

// Number of unknowns (road slots first when present).
//
// # Safety
// `op` must come from [`rf_operator_assemble`]; `dim` must be valid for
// writes.
enum RfStatus rf_operator_dim(const struct RfOperator *op, uintptr_t *dim);

// # Safety
// `op` must be null or come from [`rf_operator_assemble`], and must not be
// used afterwards.
void rf_operator_free(struct RfOperator *op);

// Principal eigenpair by the iterative solver, residual at most `tol`.
//
// # Safety
// `op` must come from [`rf_operator_assemble`]; `out` must be valid for
// writes.
enum RfStatus rf_eigen_principal(const struct RfOperator *op, double tol, struct RfEigen **out);

// Principal eigenpair by dense factorization (small operators only).
//
// # Safety
// As [`rf_eigen_principal`].
enum RfStatus rf_eigen_dense(const struct RfOperator *op, struct RfEigen **out);

// # Safety
// `eigen` must come from an `rf_eigen_*` constructor; `lambda` must be
// valid for writes.
enum RfStatus rf_eigen_lambda(const struct RfEigen *eigen, double *lambda);

// # Safety
// As [`rf_eigen_lambda`].
enum RfStatus rf_eigen_residual(const struct RfEigen *eigen, double *residual);

// Copies the stacked eigenvector (max-norm 1) into `buf`. `len` is the
// buffer capacity; the required length is always written to `needed`,
// and `RF_STATUS_BUFFER_TOO_SMALL` is returned when it exceeds `len`.
//
// # Safety
// `buf` must be valid for `len` writes (may be null when `len` is 0);
// `needed` must be valid for writes.
enum RfStatus rf_eigen_copy_vector(const struct RfEigen *eigen,
                                   double *buf,
                                   uintptr_t len,
                                   uintptr_t *needed);

// # Safety
// `eigen` must be null or come from an `rf_eigen_*` constructor, and must
// not be used afterwards.
void rf_eigen_free(struct RfEigen *eigen);

// Defaults for the exhaustion ladder.
//
// # Safety
// `cfg` must be valid for writes.
enum RfStatus rf_exhaust_config_default(struct RfExhaustConfig *cfg);

// Principal eigenvalue on growing truncations.
//
// # Safety
// Pointers must be valid; `out` must be valid for writes.
enum RfStatus rf_exhaust_lambda(const struct RfParameters *parameters,
                                const struct RfNiche *niche,
                                enum RfOperatorKind kind_,
                                const struct RfExhaustConfig *cfg,
                                struct RfExhaustion *out);

// Lower and upper critical speeds of the coupled system, bisected to
// `tol`. The speed in `parameters` is ignored.
//
// # Safety
// Pointers must be valid; `out` must be valid for writes.
enum RfStatus rf_critical_speeds(const struct RfParameters *parameters,
                                 const struct RfNiche *niche,
                                 const struct RfExhaustConfig *cfg,
                                 double tol,
                                 struct RfSpeeds *out);

// Persistence/extinction verdict by bracketing simulation on `grid`.
//
// # Safety
// Pointers must be valid; `out` must be valid for writes.
enum RfStatus rf_classify(const struct RfParameters *parameters,
                          const struct RfNiche *niche,
                          const struct RfGrid *grid,
                          double horizon,
                          double dt,
                          double steady_tol,
                          struct RfClassification *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ROADFIELD_H */
