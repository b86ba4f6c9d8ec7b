#ifndef MMFLOW_H
#define MMFLOW_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum MmflowStatus {
  MMFLOW_STATUS_OK = 0,
  MMFLOW_STATUS_NULL_ARGUMENT = 1,
  MMFLOW_STATUS_INVALID_UTF8 = 2,
  MMFLOW_STATUS_IO = 3,
  MMFLOW_STATUS_PARSE = 4,
  MMFLOW_STATUS_MODEL_FORMAT = 5,
  MMFLOW_STATUS_SHAPE = 6,
  MMFLOW_STATUS_DOMAIN = 7,
  MMFLOW_STATUS_GEOMETRY = 8,
  MMFLOW_STATUS_UNKNOWN_NODE = 9,
  MMFLOW_STATUS_PANIC = 10,
  MMFLOW_STATUS_OTHER = 11,
} MmflowStatus;

/**
 * A weighted OD flow graph built edge by edge.
 */
typedef struct MmflowGraph MmflowGraph;

/**
 * A fitted model loaded from its JSON file.
 */
typedef struct MmflowModel MmflowModel;

/**
 * A zone partition loaded from a polygon file.
 */
typedef struct MmflowPartition MmflowPartition;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *mmflow_version(void);

/**
 * Message of the last failed call on this thread, empty if none. Valid
 * until the next failing call on the same thread.
 */
const char *mmflow_last_error(void);

/**
 * Loads a model file written by the `train` stage.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MmflowStatus mmflow_model_load(const char *path, struct MmflowModel **out);

/**
 * Parses a model from its JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MmflowStatus mmflow_model_from_json(const char *json, struct MmflowModel **out);

/**
 * Number of features the model expects; 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t mmflow_model_n_features(const struct MmflowModel *model);

/**
 * Name of feature `index`, owned by the handle; null when out of range.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
const char *mmflow_model_feature_name(const struct MmflowModel *model, size_t index);

/**
 * Predicts `n_rows` rows of a row-major `n_rows × n_features` matrix
 * into `out`.
 *
 * # Safety
 * `x` must hold `n_rows * n_features` doubles and `out` `n_rows`.
 */
enum MmflowStatus mmflow_model_predict(const struct MmflowModel *model,
                                       const double *x,
                                       size_t n_rows,
                                       size_t n_features,
                                       double *out);

/**
 * SHAP attributions of one row: `phi` receives `n_features` values and
 * `base_value` the expected model output.
 *
 * # Safety
 * `x` and `phi` must each hold `n_features` doubles; `base_value` must be
 * a valid pointer.
 */
enum MmflowStatus mmflow_model_shap(const struct MmflowModel *model,
                                    const double *x,
                                    size_t n_features,
                                    double *phi,
                                    double *base_value);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void mmflow_model_free(struct MmflowModel *model);

/**
 * Loads a polygon file. `level` may be null to take the first zone's level.
 *
 * # Safety
 * `path` and a non-null `level` must be NUL-terminated strings; `out`
 * must be a valid pointer.
 */
enum MmflowStatus mmflow_partition_load(const char *path,
                                        const char *level,
                                        struct MmflowPartition **out);

/**
 * # Safety
 * `part` must be null or a live handle.
 */
size_t mmflow_partition_n_zones(const struct MmflowPartition *part);

/**
 * Zone id at `index`, owned by the handle; null when out of range.
 *
 * # Safety
 * `part` must be null or a live handle.
 */
const char *mmflow_partition_zone_id(const struct MmflowPartition *part, size_t index);

/**
 * Zone index containing `(x, y)`, or -1 when the point lies in no zone.
 *
 * # Safety
 * `part` must be a live handle and `zone` a valid pointer.
 */
enum MmflowStatus mmflow_partition_assign(const struct MmflowPartition *part,
                                          double x,
                                          double y,
                                          int64_t *zone);

/**
 * # Safety
 * `part` must be null or a handle not yet freed.
 */
void mmflow_partition_free(struct MmflowPartition *part);

/**
 * An empty graph.
 */
struct MmflowGraph *mmflow_graph_new(void);

/**
 * Adds `count` trips from `origin` to `dest`, creating nodes as needed.
 *
 * # Safety
 * `graph` must be a live handle; `origin` and `dest` NUL-terminated strings.
 */
enum MmflowStatus mmflow_graph_add_trips(struct MmflowGraph *graph,
                                         const char *origin,
                                         const char *dest,
                                         uint64_t count);

/**
 * # Safety
 * `graph` must be null or a live handle.
 */
size_t mmflow_graph_n_nodes(const struct MmflowGraph *graph);

/**
 * # Safety
 * `graph` must be null or a live handle.
 */
size_t mmflow_graph_n_edges(const struct MmflowGraph *graph);

/**
 * Normalized node betweenness of `node`.
 *
 * # Safety
 * `graph` must be a live handle, `node` a NUL-terminated string and `out`
 * a valid pointer.
 */
enum MmflowStatus mmflow_graph_node_betweenness(const struct MmflowGraph *graph,
                                                const char *node,
                                                double *out);

/**
 * Mean directed clustering coefficient over all nodes.
 *
 * # Safety
 * `graph` must be a live handle and `out` a valid pointer.
 */
enum MmflowStatus mmflow_graph_average_clustering(const struct MmflowGraph *graph, double *out);

/**
 * # Safety
 * `graph` must be null or a handle not yet freed.
 */
void mmflow_graph_free(struct MmflowGraph *graph);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MMFLOW_H */
