#ifndef HIBEM_H
#define HIBEM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes of all fallible functions.
 */
typedef enum HibemStatus {
  HIBEM_STATUS_OK = 0,
  HIBEM_STATUS_NULL_POINTER = 1,
  HIBEM_STATUS_INVALID_ARGUMENT = 2,
  HIBEM_STATUS_CONFIG_ERROR = 3,
  HIBEM_STATUS_NUMERICAL_ERROR = 4,
  HIBEM_STATUS_IO_ERROR = 5,
  HIBEM_STATUS_BUFFER_TOO_SMALL = 6,
  HIBEM_STATUS_PANIC = 7,
} HibemStatus;

/**
 * Boundary geometry (opaque).
 */
typedef struct HibemGeometry HibemGeometry;

/**
 * Admissible hierarchical mesh (opaque).
 */
typedef struct HibemMesh HibemMesh;

/**
 * Result of an experiment run (opaque).
 */
typedef struct HibemTrace HibemTrace;

/**
 * An active element: cell `(i1, i2)` of level `level` on patch `patch`.
 */
typedef struct HibemElement {
  size_t patch;
  size_t level;
  size_t i1;
  size_t i2;
} HibemElement;

/**
 * One iteration of a run; `energy_error` is NaN when unavailable.
 */
typedef struct HibemTraceRow {
  size_t ell;
  size_t num_elements;
  size_t dofs;
  double estimator;
  double energy_error;
  size_t num_marked;
  double seconds;
} HibemTraceRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, NUL-terminated. `needed`
 * receives the required capacity; `BufferTooSmall` is returned and nothing
 * is written when `len` is short of it.
 *
 * # Safety
 * `buf` must be valid for `len` bytes when non-null; `needed` null or valid.
 */
enum HibemStatus hibem_last_error_message(char *buf, size_t len, size_t *needed);

/**
 * Geometry by fixture name (`cube`, `quarter_pipe`) or JSON file path.
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` valid for one write.
 */
enum HibemStatus hibem_geometry_new(const char *name, struct HibemGeometry **out);

/**
 * Geometry from a JSON document.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` valid for one write.
 */
enum HibemStatus hibem_geometry_from_json(const char *json, struct HibemGeometry **out);

/**
 * # Safety
 * `geom` must be null or a handle from `hibem_geometry_*` not yet freed.
 */
void hibem_geometry_free(struct HibemGeometry *geom);

/**
 * # Safety
 * `geom` must be a live handle; `out` valid for one write.
 */
enum HibemStatus hibem_geometry_num_patches(const struct HibemGeometry *geom, size_t *out);

/**
 * Point `gamma_patch(u, v)` written to `out[0..3]`.
 *
 * # Safety
 * `geom` must be a live handle; `out` valid for three writes.
 */
enum HibemStatus hibem_geometry_eval(const struct HibemGeometry *geom,
                                     size_t patch,
                                     double u,
                                     double v,
                                     double *out);

/**
 * Initial mesh of polynomial degree `p` on `geom`.
 *
 * # Safety
 * `geom` must be a live handle; `out` valid for one write.
 */
enum HibemStatus hibem_mesh_initial(const struct HibemGeometry *geom,
                                    size_t p,
                                    struct HibemMesh **out);

/**
 * # Safety
 * `mesh` must be a live handle; `out` valid for one write.
 */
enum HibemStatus hibem_mesh_uniform_refine(const struct HibemMesh *mesh, struct HibemMesh **out);

/**
 * Refinement with closure of the active elements with the given indices.
 *
 * # Safety
 * `mesh` must be a live handle; `marked` valid for `n` reads when `n > 0`;
 * `out` valid for one write.
 */
enum HibemStatus hibem_mesh_refine(const struct HibemMesh *mesh,
                                   const size_t *marked,
                                   size_t n,
                                   struct HibemMesh **out);

/**
 * # Safety
 * `mesh` must be a live handle; `out` valid for one write.
 */
enum HibemStatus hibem_mesh_num_elements(const struct HibemMesh *mesh, size_t *out);

/**
 * # Safety
 * `mesh` must be a live handle; `out` valid for one write.
 */
enum HibemStatus hibem_mesh_element(const struct HibemMesh *mesh,
                                    size_t index,
                                    struct HibemElement *out);

/**
 * # Safety
 * `mesh` must be a live handle; `out` valid for one write.
 */
enum HibemStatus hibem_mesh_is_admissible(const struct HibemMesh *mesh, bool *out);

/**
 * # Safety
 * `mesh` must be null or a handle from `hibem_mesh_*` not yet freed.
 */
void hibem_mesh_free(struct HibemMesh *mesh);

/**
 * Runs an experiment described by a JSON run configuration (the same
 * document the command line accepts; `{}` selects all defaults).
 *
 * # Safety
 * `config_json` must be a NUL-terminated string; `out` valid for one write.
 */
enum HibemStatus hibem_run(const char *config_json, struct HibemTrace **out);

/**
 * # Safety
 * `trace` must be a live handle; `out` valid for one write.
 */
enum HibemStatus hibem_trace_num_rows(const struct HibemTrace *trace, size_t *out);

/**
 * # Safety
 * `trace` must be a live handle; `out` valid for one write.
 */
enum HibemStatus hibem_trace_row(const struct HibemTrace *trace,
                                 size_t index,
                                 struct HibemTraceRow *out);

/**
 * Least-squares estimator rate over the last `window` rows.
 *
 * # Safety
 * `trace` must be a live handle; `out` valid for one write.
 */
enum HibemStatus hibem_trace_estimator_rate(const struct HibemTrace *trace,
                                            size_t window,
                                            double *out);

/**
 * The run's CSV text, with the buffer protocol of
 * `hibem_last_error_message`.
 *
 * # Safety
 * `trace` must be a live handle; `buf` valid for `len` bytes when non-null;
 * `needed` null or valid.
 */
enum HibemStatus hibem_trace_csv(const struct HibemTrace *trace,
                                 char *buf,
                                 size_t len,
                                 size_t *needed);

/**
 * # Safety
 * `trace` must be null or a handle from `hibem_run` not yet freed.
 */
void hibem_trace_free(struct HibemTrace *trace);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HIBEM_H */
