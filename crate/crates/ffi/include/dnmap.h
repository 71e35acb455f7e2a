#ifndef DNMAP_H
#define DNMAP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of a call.
 */
typedef enum DnmapStatus {
  DNMAP_STATUS_OK = 0,
  DNMAP_STATUS_NULL_POINTER = 1,
  /**
   * Malformed or inconsistent input.
   */
  DNMAP_STATUS_INVALID_INPUT = 2,
  /**
   * The computation broke down (rank ambiguity, ill-conditioned winding...).
   */
  DNMAP_STATUS_NUMERICAL = 3,
  /**
   * An internal panic was caught.
   */
  DNMAP_STATUS_PANIC = 4,
} DnmapStatus;

/**
 * Opaque triangle mesh.
 */
typedef struct DnmapMesh DnmapMesh;

/**
 * Opaque boundary operator.
 */
typedef struct DnmapOperator DnmapOperator;

typedef struct DnmapTopology {
  size_t handle_rank;
  int64_t euler_characteristic;
  size_t genus;
  double gap_ratio;
} DnmapTopology;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *dnmap_last_error_message(void);

/**
 * Operator of the unit disk truncated to `modes` modes.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum DnmapStatus dnmap_operator_disk(size_t modes, struct DnmapOperator **out);

/**
 * Parses an operator from JSON text with an inline matrix.
 *
 * # Safety
 * `json` must be null or a NUL-terminated string; `out` null or valid for
 * writes.
 */
enum DnmapStatus dnmap_operator_from_json(const char *json, struct DnmapOperator **out);

/**
 * Serializes an operator (matrix inline). Free the result with
 * [`dnmap_string_free`].
 *
 * # Safety
 * `op` must be null or a live handle; `out` null or valid for writes.
 */
enum DnmapStatus dnmap_operator_to_json(const struct DnmapOperator *op, char **out);

/**
 * Number of modes `N` of an operator, or 0 for a null handle.
 *
 * # Safety
 * `op` must be null or a live handle.
 */
size_t dnmap_operator_modes(const struct DnmapOperator *op);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void dnmap_string_free(char *s);

/**
 * # Safety
 * `op` must be null or a handle returned by this library, not yet freed.
 */
void dnmap_operator_free(struct DnmapOperator *op);

/**
 * # Safety
 * `mesh` must be null or a handle returned by this library, not yet freed.
 */
void dnmap_mesh_free(struct DnmapMesh *mesh);

/**
 * Handle rank, Euler characteristic and genus. `discretized != 0` selects
 * the gap-based threshold meant for finite-element operators.
 *
 * # Safety
 * `op` must be null or a live handle; `out` null or valid for writes.
 */
enum DnmapStatus dnmap_topology(const struct DnmapOperator *op,
                                int32_t discretized,
                                struct DnmapTopology *out);

/**
 * Runs all characterization checks with default tolerances. `verdict`
 * receives 0 (pass), 1 (fail) or 2 (undecided); `report`, if not null,
 * receives the JSON report, to be freed with [`dnmap_string_free`].
 *
 * # Safety
 * `op` must be null or a live handle; `verdict` null or valid for writes;
 * `report` null or valid for writes.
 */
enum DnmapStatus dnmap_check(const struct DnmapOperator *op,
                             uint64_t seed,
                             int32_t *verdict,
                             char **report);

/**
 * Winding number about `z` of the curve with Fourier coefficients
 * `coeffs` (interleaved re, im; `2(2N + 1)` doubles for modes `-N..=N`) on
 * the unit circle.
 *
 * # Safety
 * `coeffs` must be null or valid for `2(2 modes + 1)` reads; `out` null or
 * valid for writes.
 */
enum DnmapStatus dnmap_winding_number(const double *coeffs,
                                      size_t modes,
                                      double z_re,
                                      double z_im,
                                      int64_t *out);

/**
 * Parses an ASCII OFF mesh.
 *
 * # Safety
 * `text` must be null or a NUL-terminated string; `out` null or valid for
 * writes.
 */
enum DnmapStatus dnmap_mesh_from_off(const char *text, struct DnmapMesh **out);

/**
 * Finite-element operator of a mesh, projected to `modes` modes.
 *
 * # Safety
 * `mesh` must be null or a live handle; `out` null or valid for writes.
 */
enum DnmapStatus dnmap_dn_from_mesh(const struct DnmapMesh *mesh,
                                    size_t modes,
                                    struct DnmapOperator **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DNMAP_H */
