#ifndef BIOREL_H
#define BIOREL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GkStatus {
  GK_STATUS_OK = 0,
  GK_STATUS_NULL_POINTER = 1,
  GK_STATUS_INVALID_UTF8 = 2,
  GK_STATUS_INVALID_ARGUMENT = 3,
  GK_STATUS_IO = 4,
  GK_STATUS_PARSE = 5,
  GK_STATUS_KERNEL = 6,
  GK_STATUS_OUT_OF_RANGE = 7,
  GK_STATUS_PANIC = 99,
} GkStatus;

typedef enum GkEdgeMode {
  GK_EDGE_MODE_IDENTITY = 0,
  GK_EDGE_MODE_EMBEDDED_SPARSE_RBF = 1,
} GkEdgeMode;

/**
 * Learned edge-label vectors.
 */
typedef struct GkEdgeStore GkEdgeStore;

/**
 * Square kernel matrix with one id per row.
 */
typedef struct GkGram GkGram;

/**
 * Evidence trees read from a tree file and its vector table.
 */
typedef struct GkTrees GkTrees;

typedef struct GkKernelParams {
  double lambda;
  double alpha;
  double beta;
  /**
   * One of the `GkEdgeMode` values.
   */
  uint32_t edge_mode;
} GkKernelParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next call on the same thread.
 */
const char *gk_last_error(void);

/**
 * Fills `out` with the default kernel parameters.
 *
 * # Safety
 * `out` must be null or point to writable memory for one `GkKernelParams`.
 */
enum GkStatus gk_kernel_params_default(struct GkKernelParams *out);

/**
 * Reads a tree file and its vector table.
 *
 * # Safety
 * `trees_path` and `vectors_path` must be null or NUL-terminated strings;
 * `out` must be null or writable.
 */
enum GkStatus gk_trees_load(const char *trees_path, const char *vectors_path, struct GkTrees **out);

/**
 * # Safety
 * `trees` must be null or a handle from `gk_trees_load`; `out` writable.
 */
enum GkStatus gk_trees_len(const struct GkTrees *trees, size_t *out);

/**
 * # Safety
 * `trees` must be null or a handle from `gk_trees_load` not yet freed.
 */
void gk_trees_free(struct GkTrees *trees);

/**
 * Reads an edge-vector store file.
 *
 * # Safety
 * `path` must be null or NUL-terminated; `out` must be null or writable.
 */
enum GkStatus gk_edges_load(const char *path, struct GkEdgeStore **out);

/**
 * # Safety
 * `edges` must be null or a handle from `gk_edges_load` not yet freed.
 */
void gk_edges_free(struct GkEdgeStore *edges);

/**
 * Kernel value between trees `i` and `j`; normalized when `normalized`
 * is non-zero. `edges` may be null unless the edge mode is embedded.
 *
 * # Safety
 * Handles must be valid or null; `params` and `out` must be null or valid.
 */
enum GkStatus gk_tree_kernel(const struct GkTrees *trees,
                             size_t i,
                             size_t j,
                             const struct GkKernelParams *params,
                             const struct GkEdgeStore *edges,
                             int32_t normalized,
                             double *out);

/**
 * Normalized Gram matrix over every loaded tree.
 *
 * # Safety
 * Handles must be valid or null; `params` and `out` must be null or valid.
 */
enum GkStatus gk_gram_compute(const struct GkTrees *trees,
                              const struct GkKernelParams *params,
                              const struct GkEdgeStore *edges,
                              struct GkGram **out);

/**
 * # Safety
 * `path` must be null or NUL-terminated; `out` must be null or writable.
 */
enum GkStatus gk_gram_read(const char *path, struct GkGram **out);

/**
 * # Safety
 * `gram` must be null or a valid handle; `path` NUL-terminated or null.
 */
enum GkStatus gk_gram_write(const struct GkGram *gram, const char *path);

/**
 * # Safety
 * `gram` must be null or a valid handle; `out` null or writable.
 */
enum GkStatus gk_gram_size(const struct GkGram *gram, size_t *out);

/**
 * # Safety
 * `gram` must be null or a valid handle; `out` null or writable.
 */
enum GkStatus gk_gram_get(const struct GkGram *gram, size_t i, size_t j, double *out);

/**
 * # Safety
 * `gram` must be null or a handle not yet freed.
 */
void gk_gram_free(struct GkGram *gram);

/**
 * Squared MMD between two index sets of a Gram matrix.
 *
 * # Safety
 * `a` and `b` must point to `na` and `nb` indices; `gram` and `out` valid.
 */
enum GkStatus gk_mmd(const struct GkGram *gram,
                     const size_t *a,
                     size_t na,
                     const size_t *b,
                     size_t nb,
                     double *out);

/**
 * Replaces the row-major `n`×`n` symmetric matrix in `data` by its
 * nearest PSD matrix. `min_eigenvalue` (may be null) receives the
 * smallest eigenvalue of the input.
 *
 * # Safety
 * `data` must point to `n * n` writable doubles.
 */
enum GkStatus gk_psd_project(double *data, size_t n, double *min_eigenvalue);

/**
 * Parses PENMAN text and returns the graphs as a JSON array in `out`,
 * to be released with `gk_string_free`.
 *
 * # Safety
 * `text` must be null or NUL-terminated; `out` null or writable.
 */
enum GkStatus gk_penman_to_json(const char *text, char **out);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void gk_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BIOREL_H */
