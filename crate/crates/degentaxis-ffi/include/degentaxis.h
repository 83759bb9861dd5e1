/* C interface to the degentaxis simulator. Generated by cbindgen. */

#ifndef DEGENTAXIS_H
#define DEGENTAXIS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every API call.
 */
typedef enum DgtStatus {
  DgtStatus_Ok = 0,
  DgtStatus_NullPointer = 1,
  DgtStatus_InvalidArgument = 2,
  DgtStatus_ParseError = 3,
  DgtStatus_RuntimeError = 4,
  DgtStatus_IoError = 5,
  DgtStatus_Utf8Error = 6,
} DgtStatus;

/**
 * Parsed run configuration (opaque).
 */
typedef struct DgtConfig DgtConfig;

/**
 * A live simulation (opaque): parameters plus the evolving state.
 */
typedef struct DgtSim DgtSim;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Version of the underlying crate, as a static NUL-terminated string.
 */
const char *dgt_version(void);

/**
 * Message of the last error observed on this thread. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *dgt_last_error_message(void);

/**
 * Parse a configuration text. On success writes a handle to `out`.
 *
 * # Safety
 * `text` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum DgtStatus dgt_config_parse(const char *text, struct DgtConfig **out);

/**
 * # Safety
 * `cfg` must come from `dgt_config_parse` and not be freed twice.
 */
void dgt_config_free(struct DgtConfig *cfg);

/**
 * Build a simulation from a configuration: grid, initial data and the
 * regularizing shift.
 *
 * # Safety
 * `cfg` must be a live config handle and `out` a valid pointer.
 */
enum DgtStatus dgt_sim_new(const struct DgtConfig *cfg, struct DgtSim **out);

/**
 * # Safety
 * `sim` must come from `dgt_sim_new` and not be freed twice.
 */
void dgt_sim_free(struct DgtSim *sim);

/**
 * # Safety
 * `sim` must be a live simulation handle.
 */
double dgt_sim_time(const struct DgtSim *sim);

/**
 * # Safety
 * `sim` must be a live simulation handle.
 */
uintptr_t dgt_sim_cell_count(const struct DgtSim *sim);

/**
 * One adaptive step at the current stable step size.
 *
 * # Safety
 * `sim` must be a live simulation handle.
 */
enum DgtStatus dgt_sim_step(struct DgtSim *sim);

/**
 * Advance until the simulation clock reaches `t_target`.
 *
 * # Safety
 * `sim` must be a live simulation handle.
 */
enum DgtStatus dgt_sim_advance(struct DgtSim *sim, double t_target);

/**
 * Copy the density field into `buf` (row-major, x fastest).
 *
 * # Safety
 * `sim` must be live; `buf` must hold `dgt_sim_cell_count(sim)` doubles.
 */
enum DgtStatus dgt_sim_copy_u(const struct DgtSim *sim, double *buf, uintptr_t len);

/**
 * Copy the nutrient field into `buf` (row-major, x fastest).
 *
 * # Safety
 * `sim` must be live; `buf` must hold `dgt_sim_cell_count(sim)` doubles.
 */
enum DgtStatus dgt_sim_copy_v(const struct DgtSim *sim, double *buf, uintptr_t len);

/**
 * ∫u over the domain.
 *
 * # Safety
 * `sim` must be a live simulation handle.
 */
double dgt_sim_mass_u(const struct DgtSim *sim);

/**
 * ∫v over the domain.
 *
 * # Safety
 * `sim` must be a live simulation handle.
 */
double dgt_sim_mass_v(const struct DgtSim *sim);

/**
 * Total |negative u| mass zeroed so far by the clip policy.
 *
 * # Safety
 * `sim` must be a live simulation handle.
 */
double dgt_sim_clipped_mass(const struct DgtSim *sim);

/**
 * Write the current state as a DEGTAX1 snapshot file.
 *
 * # Safety
 * `sim` must be live and `path` a valid NUL-terminated string.
 */
enum DgtStatus dgt_sim_save_snapshot(const struct DgtSim *sim, const char *path);

/**
 * (W¹,∞)*-norm of a raw cell field on a freshly described grid.
 * `cells` and `extents` must point to `dim` entries; `values` to the
 * product of the cell counts.
 *
 * # Safety
 * All pointers must be valid for the lengths implied by `dim` and `cells`.
 */
enum DgtStatus dgt_dual_norm(uint32_t dim,
                             const uintptr_t *cells,
                             const double *extents,
                             const double *values,
                             uintptr_t n_values,
                             double *out_value);

/**
 * (W¹,∞)*-distance between the u fields of two DEGTAX1 snapshots.
 *
 * # Safety
 * Paths must be valid NUL-terminated strings; `out_value` a valid pointer.
 */
enum DgtStatus dgt_snapshot_dual_distance(const char *path_a,
                                          const char *path_b,
                                          double *out_value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DEGENTAXIS_H */
