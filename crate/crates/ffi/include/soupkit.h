#ifndef SOUPKIT_H
#define SOUPKIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SoupkitArch {
  SOUPKIT_ARCH_GCN = 0,
  SOUPKIT_ARCH_SAGE = 1,
} SoupkitArch;

typedef enum SoupkitMethod {
  SOUPKIT_METHOD_UNIFORM = 0,
  SOUPKIT_METHOD_GREEDY = 1,
  SOUPKIT_METHOD_GIS = 2,
  SOUPKIT_METHOD_LS = 3,
  SOUPKIT_METHOD_PLS = 4,
} SoupkitMethod;

typedef enum SoupkitOptimizer {
  SOUPKIT_OPTIMIZER_SGD = 0,
  SOUPKIT_OPTIMIZER_ADAM = 1,
} SoupkitOptimizer;

typedef enum SoupkitSplit {
  SOUPKIT_SPLIT_TRAIN = 0,
  SOUPKIT_SPLIT_VAL = 1,
  SOUPKIT_SPLIT_TEST = 2,
} SoupkitSplit;

typedef enum SoupkitStatus {
  SOUPKIT_STATUS_OK = 0,
  SOUPKIT_STATUS_NULL_POINTER = 1,
  SOUPKIT_STATUS_INVALID_ARGUMENT = 2,
  SOUPKIT_STATUS_IO = 3,
  SOUPKIT_STATUS_FORMAT = 4,
  SOUPKIT_STATUS_INCOMPATIBLE = 5,
  SOUPKIT_STATUS_DIVERGED = 6,
  SOUPKIT_STATUS_NO_VALIDATION = 7,
  SOUPKIT_STATUS_PANIC = 8,
} SoupkitStatus;

typedef struct SoupkitGraph SoupkitGraph;

typedef struct SoupkitIngredients SoupkitIngredients;

typedef struct SoupkitModel SoupkitModel;

typedef struct SoupkitReport SoupkitReport;

typedef struct SoupkitSbmConfig {
  size_t nodes;
  size_t classes;
  double p_in;
  double p_out;
  size_t feat_dim;
  float noise;
  /**
   * Train, validation and test fractions.
   */
  double split[3];
  uint64_t seed;
} SoupkitSbmConfig;

typedef struct SoupkitTrainConfig {
  enum SoupkitArch arch;
  size_t layers;
  size_t hidden;
  float dropout;
  size_t epochs;
  float lr;
  float weight_decay;
  enum SoupkitOptimizer optimizer;
  /**
   * Number of ingredients.
   */
  size_t n;
  size_t workers;
  uint64_t seed;
  bool diversity_jitter;
} SoupkitTrainConfig;

typedef struct SoupkitSoupConfig {
  enum SoupkitMethod method;
  size_t granularity;
  size_t epochs;
  float lr;
  float weight_decay;
  size_t t0;
  /**
   * Partition count K.
   */
  size_t parts;
  /**
   * Partitions drawn per epoch R.
   */
  size_t budget;
  size_t score_interval;
  bool simplex;
  double val_holdout;
  uint64_t seed;
} SoupkitSoupConfig;

typedef struct SoupkitCounters {
  uint64_t forward_passes;
  uint64_t backward_passes;
  uint64_t ingredient_scoring_passes;
  uint64_t interpolation_passes;
  uint64_t snapshot_scoring_passes;
  uint64_t peak_tracked_bytes;
  double mean_nodes_per_pass;
} SoupkitCounters;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or an empty string.
 * Valid until the next soupkit call on the same thread.
 */
const char *soupkit_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *soupkit_version(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must be null or a pointer returned by a soupkit function that
 * transfers string ownership, not yet freed.
 */
void soupkit_string_free(char *s);

struct SoupkitSbmConfig soupkit_sbm_config_default(void);

/**
 * # Safety
 * `config` must point to a valid config; `out` to writable storage.
 */
enum SoupkitStatus soupkit_graph_generate_sbm(const struct SoupkitSbmConfig *config,
                                              struct SoupkitGraph **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` writable.
 */
enum SoupkitStatus soupkit_graph_load(const char *path, struct SoupkitGraph **out);

/**
 * # Safety
 * `graph` must be a live handle; `path` a NUL-terminated string.
 */
enum SoupkitStatus soupkit_graph_save(const struct SoupkitGraph *graph, const char *path);

/**
 * Number of nodes; 0 for a null handle.
 *
 * # Safety
 * `graph` must be null or a live handle.
 */
size_t soupkit_graph_num_nodes(const struct SoupkitGraph *graph);

/**
 * Number of stored (directed) edges; 0 for a null handle.
 *
 * # Safety
 * `graph` must be null or a live handle.
 */
size_t soupkit_graph_num_edges(const struct SoupkitGraph *graph);

/**
 * # Safety
 * `graph` must be null or a handle not yet freed.
 */
void soupkit_graph_free(struct SoupkitGraph *graph);

struct SoupkitTrainConfig soupkit_train_config_default(void);

/**
 * Trains `config->n` ingredients on `graph` from one shared initialization.
 *
 * # Safety
 * `graph` must be a live handle, `config` valid, `out` writable.
 */
enum SoupkitStatus soupkit_ingredients_train(const struct SoupkitGraph *graph,
                                             const struct SoupkitTrainConfig *config,
                                             struct SoupkitIngredients **out);

/**
 * # Safety
 * `dir` must be a NUL-terminated string; `out` writable.
 */
enum SoupkitStatus soupkit_ingredients_load(const char *dir, struct SoupkitIngredients **out);

/**
 * Writes a trained pool (manifest plus one checkpoint per member). Pools
 * that were loaded from disk are already saved and are rejected.
 *
 * # Safety
 * `ingredients` must be a live handle; `dir` a NUL-terminated string.
 */
enum SoupkitStatus soupkit_ingredients_save(const struct SoupkitIngredients *ingredients,
                                            const char *dir);

/**
 * Number of members; 0 for a null handle.
 *
 * # Safety
 * `ingredients` must be null or a live handle.
 */
size_t soupkit_ingredients_count(const struct SoupkitIngredients *ingredients);

/**
 * Copies member `index` out as a standalone model.
 *
 * # Safety
 * `ingredients` must be a live handle; `out` writable.
 */
enum SoupkitStatus soupkit_ingredients_get(const struct SoupkitIngredients *ingredients,
                                           size_t index,
                                           struct SoupkitModel **out);

/**
 * # Safety
 * `ingredients` must be null or a handle not yet freed.
 */
void soupkit_ingredients_free(struct SoupkitIngredients *ingredients);

struct SoupkitSoupConfig soupkit_soup_config_default(enum SoupkitMethod method);

/**
 * Soups the pool on `graph` with the method in `config`.
 *
 * # Safety
 * Handles must be live, `config` valid, `out` writable.
 */
enum SoupkitStatus soupkit_soup(const struct SoupkitIngredients *ingredients,
                                const struct SoupkitGraph *graph,
                                const struct SoupkitSoupConfig *config,
                                struct SoupkitReport **out);

/**
 * NaN for a null handle.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
double soupkit_report_val_acc(const struct SoupkitReport *report);

/**
 * NaN for a null handle or a graph without test nodes.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
double soupkit_report_test_acc(const struct SoupkitReport *report);

/**
 * NaN for a null handle.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
double soupkit_report_wall_seconds(const struct SoupkitReport *report);

/**
 * # Safety
 * `report` must be a live handle; `out` writable.
 */
enum SoupkitStatus soupkit_report_counters(const struct SoupkitReport *report,
                                           struct SoupkitCounters *out);

/**
 * Report as JSON; free the string with [`soupkit_string_free`].
 *
 * # Safety
 * `report` must be a live handle; `out` writable.
 */
enum SoupkitStatus soupkit_report_to_json(const struct SoupkitReport *report, char **out);

/**
 * Copies the souped weights out as a standalone model.
 *
 * # Safety
 * `report` must be a live handle; `out` writable.
 */
enum SoupkitStatus soupkit_report_model(const struct SoupkitReport *report,
                                        struct SoupkitModel **out);

/**
 * # Safety
 * `report` must be null or a handle not yet freed.
 */
void soupkit_report_free(struct SoupkitReport *report);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` writable.
 */
enum SoupkitStatus soupkit_model_load(const char *path, struct SoupkitModel **out);

/**
 * # Safety
 * `model` must be a live handle; `path` a NUL-terminated string.
 */
enum SoupkitStatus soupkit_model_save(const struct SoupkitModel *model, const char *path);

/**
 * Accuracy of `model` on one split of `graph`.
 *
 * # Safety
 * Handles must be live; `out` writable.
 */
enum SoupkitStatus soupkit_model_evaluate(const struct SoupkitModel *model,
                                          const struct SoupkitGraph *graph,
                                          enum SoupkitSplit split,
                                          double *out);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void soupkit_model_free(struct SoupkitModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SOUPKIT_H */
