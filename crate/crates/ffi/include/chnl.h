#ifndef CHNL_H
#define CHNL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ChnlStatus {
  CHNL_STATUS_OK = 0,
  CHNL_STATUS_NULL_POINTER = 1,
  CHNL_STATUS_INVALID_ARGUMENT = 2,
  CHNL_STATUS_CONFIG = 3,
  /*
   theta, adhesion or step-size constraint violated.
   */
  CHNL_STATUS_CONSTRAINT = 4,
  CHNL_STATUS_NON_FINITE = 5,
  CHNL_STATUS_IO = 6,
  /*
   Caller buffer length does not match the grid.
   */
  CHNL_STATUS_BUFFER_SIZE = 7,
  CHNL_STATUS_PANIC = 8,
} ChnlStatus;

typedef enum ChnlProfile {
  CHNL_PROFILE_COMPACT_BUMP = 0,
  CHNL_PROFILE_TRUNCATED_GAUSSIAN = 1,
} ChnlProfile;

/*
 Nonlocal interaction kernel on a fixed grid.
 */
typedef struct ChnlKernel ChnlKernel;

/*
 A solver together with its current state.
 */
typedef struct ChnlSolver ChnlSolver;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *chnl_version(void);

/*
 Message of the last failed call on this thread, or NULL. Valid until the
 next failing call on the same thread.
 */
const char *chnl_last_error_message(void);

/*
 Builds `J_eps` on a `dim`-dimensional grid of `n` points per side.

 # Safety
 `out` must be valid for one pointer write.
 */
enum ChnlStatus chnl_kernel_new(size_t dim,
                                size_t n,
                                double length,
                                enum ChnlProfile profile,
                                double eps,
                                double alpha,
                                struct ChnlKernel **out);

/*
 Number of grid values (`n^dim`); 0 for a null handle.

 # Safety
 `k` is null or a live kernel handle.
 */
size_t chnl_kernel_len(const struct ChnlKernel *k);

/*
 `out = B_eps u`.

 # Safety
 `u` and `out` must hold `len` values; `k` is a live handle.
 */
enum ChnlStatus chnl_kernel_apply_b(const struct ChnlKernel *k,
                                    const double *u,
                                    double *out,
                                    size_t len);

/*
 `∬ J_eps (u(x) - u(y))^2`.

 # Safety
 `u` must hold `len` values, `value` one write; `k` is a live handle.
 */
enum ChnlStatus chnl_kernel_bbm_seminorm(const struct ChnlKernel *k,
                                         const double *u,
                                         size_t len,
                                         double *value);

/*
 # Safety
 `k` is null or a handle from [`chnl_kernel_new`] not yet freed.
 */
void chnl_kernel_free(struct ChnlKernel *k);

/*
 Creates a solver from a TOML run configuration (the `chnl run` format),
 with the configured initial condition as state. Relative `initial.path`
 entries resolve against the working directory.

 # Safety
 `toml` is a NUL-terminated string; `out` is valid for one pointer write.
 */
enum ChnlStatus chnl_solver_from_toml(const char *toml, struct ChnlSolver **out);

/*
 Advances by `steps` time steps. On a non-finite result the state is left
 at the last finite step and `CHNL_STATUS_NON_FINITE` is returned.

 # Safety
 `s` is a live solver handle.
 */
enum ChnlStatus chnl_solver_step(struct ChnlSolver *s, uint64_t steps);

/*
 Number of grid values; 0 for a null handle.

 # Safety
 `s` is null or a live solver handle.
 */
size_t chnl_solver_len(const struct ChnlSolver *s);

/*
 Current time; NaN for a null handle.

 # Safety
 `s` is null or a live solver handle.
 */
double chnl_solver_time(const struct ChnlSolver *s);

/*
 Steps taken so far.

 # Safety
 `s` is null or a live solver handle.
 */
uint64_t chnl_solver_step_count(const struct ChnlSolver *s);

/*
 Copies the current field into `out` (row-major, axis 0 fastest as in snapshots).

 # Safety
 `out` must hold `len` values; `s` is a live handle.
 */
enum ChnlStatus chnl_solver_get_field(const struct ChnlSolver *s, double *out, size_t len);

/*
 Replaces the current field; time and step count are kept.

 # Safety
 `u` must hold `len` values; `s` is a live handle.
 */
enum ChnlStatus chnl_solver_set_field(struct ChnlSolver *s, const double *u, size_t len);

/*
 Total mass `∫ u`.

 # Safety
 `s` is a live handle, `value` valid for one write.
 */
enum ChnlStatus chnl_solver_mass(const struct ChnlSolver *s, double *value);

/*
 Energy of the current state (`1/2 ‖u‖^2` for adhesion systems).

 # Safety
 `s` is a live handle, `value` valid for one write.
 */
enum ChnlStatus chnl_solver_energy(const struct ChnlSolver *s, double *value);

/*
 # Safety
 `s` is null or a handle from [`chnl_solver_from_toml`] not yet freed.
 */
void chnl_solver_free(struct ChnlSolver *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHNL_H */
