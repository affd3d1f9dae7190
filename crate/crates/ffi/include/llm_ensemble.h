#ifndef LLM_ENSEMBLE_H
#define LLM_ENSEMBLE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LleStatus {
  LLE_STATUS_OK = 0,
  LLE_STATUS_NULL_POINTER = 1,
  LLE_STATUS_INVALID_ARGUMENT = 2,
  LLE_STATUS_PARSE = 3,
  LLE_STATUS_IO = 4,
  LLE_STATUS_VALIDATION = 5,
  LLE_STATUS_DIMENSION_MISMATCH = 6,
  LLE_STATUS_INFEASIBLE = 7,
  LLE_STATUS_NOT_FOUND = 8,
  LLE_STATUS_UTF8 = 9,
  LLE_STATUS_PANIC = 10,
  LLE_STATUS_OTHER = 11,
} LleStatus;

/**
 * Token counting rule used by the cost functions.
 */
typedef enum LleTokenMode {
  LLE_TOKEN_MODE_CHARS_RATIO = 0,
  LLE_TOKEN_MODE_WHITESPACE = 1,
} LleTokenMode;

/**
 * Opaque quality predictor: a trained head plus its query encoder.
 */
typedef struct LlePredictor LlePredictor;

/**
 * Opaque model registry.
 */
typedef struct LleRegistry LleRegistry;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL if it succeeded.
 * The pointer stays valid until the next library call on the same thread.
 */
const char *lle_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *lle_version(void);

/**
 * Loads and validates a registry TOML file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum LleStatus lle_registry_load(const char *path, struct LleRegistry **out);

/**
 * Parses and validates a registry from TOML source text.
 *
 * # Safety
 * `source` must be a NUL-terminated string; `out` must be writable.
 */
enum LleStatus lle_registry_from_toml(const char *source, struct LleRegistry **out);

/**
 * Releases a registry. NULL is ignored.
 *
 * # Safety
 * `reg` must come from a registry constructor and not have been freed.
 */
void lle_registry_free(struct LleRegistry *reg);

/**
 * Number of models, or 0 for NULL.
 *
 * # Safety
 * `reg` must be NULL or a live registry handle.
 */
size_t lle_registry_len(const struct LleRegistry *reg);

/**
 * Name of model `index`, owned by the registry, or NULL when out of range.
 *
 * # Safety
 * `reg` must be NULL or a live registry handle.
 */
const char *lle_registry_model_name(const struct LleRegistry *reg, size_t index);

/**
 * FLOPs per token of model `index` at context length `n_ctx`.
 *
 * # Safety
 * `reg` must be a live registry handle; `out` must be writable.
 */
enum LleStatus lle_per_token_cost(const struct LleRegistry *reg,
                                  size_t index,
                                  uint64_t n_ctx,
                                  double *out);

/**
 * Total FLOPs of sending `text` to model `index`, tokens clamped to its context.
 *
 * # Safety
 * `reg` must be a live registry handle; `text` NUL-terminated; `out` writable.
 */
enum LleStatus lle_query_cost(const struct LleRegistry *reg,
                              size_t index,
                              const char *text,
                              enum LleTokenMode mode,
                              double *out);

/**
 * Costs of `text` for every model, in registry order. `out_len` must equal
 * the registry length.
 *
 * # Safety
 * `reg` must be a live registry handle; `text` NUL-terminated; `out` must
 * hold `out_len` doubles.
 */
enum LleStatus lle_query_costs(const struct LleRegistry *reg,
                               const char *text,
                               enum LleTokenMode mode,
                               double *out,
                               size_t out_len);

/**
 * Chooses the subset of `n` candidates maximizing shifted quality with total
 * cost at most `epsilon`, quantizing costs onto `grid` units.
 *
 * `out_mask[i]` is set to 1 for selected candidates and 0 otherwise. When no
 * candidate fits, the mask is all zero, totals are 0 and the status is
 * `LLE_STATUS_INFEASIBLE`. `out_total_cost` and `out_total_target` may be NULL.
 *
 * # Safety
 * `qualities` and `costs` must hold `n` doubles; `out_mask` must hold `n` bytes.
 */
enum LleStatus lle_select(const double *qualities,
                          const double *costs,
                          size_t n,
                          double epsilon,
                          size_t grid,
                          uint8_t *out_mask,
                          double *out_total_cost,
                          double *out_total_target);

/**
 * Exact 0/1 knapsack over integer costs. Sets `out_mask[i]` to 1 for chosen
 * items. Items are only taken when they strictly improve the total profit.
 *
 * # Safety
 * `costs` and `profits` must hold `n` values; `out_mask` must hold `n` bytes.
 */
enum LleStatus lle_knapsack(const uint64_t *costs,
                            const double *profits,
                            size_t n,
                            uint64_t capacity,
                            uint8_t *out_mask);

/**
 * Loads a predictor checkpoint. Heads trained on precomputed embeddings need
 * `embeddings` (a JSON-lines store); for hashed n-gram heads it may be NULL.
 *
 * # Safety
 * `checkpoint` must be NUL-terminated; `embeddings` NULL or NUL-terminated;
 * `out` writable.
 */
enum LleStatus lle_predictor_load(const char *checkpoint,
                                  const char *embeddings,
                                  struct LlePredictor **out);

/**
 * Releases a predictor. NULL is ignored.
 *
 * # Safety
 * `pred` must come from [`lle_predictor_load`] and not have been freed.
 */
void lle_predictor_free(struct LlePredictor *pred);

/**
 * Number of quality outputs, or 0 for NULL.
 *
 * # Safety
 * `pred` must be NULL or a live predictor handle.
 */
size_t lle_predictor_n_models(const struct LlePredictor *pred);

/**
 * Predicted quality for every model. `query_id` keys the embedding store and
 * may be NULL for hashed n-gram heads. `out_len` must equal
 * [`lle_predictor_n_models`].
 *
 * # Safety
 * `pred` must be a live handle; `query_id` NULL or NUL-terminated; `text`
 * NUL-terminated; `out` must hold `out_len` doubles.
 */
enum LleStatus lle_predictor_predict(const struct LlePredictor *pred,
                                     const char *query_id,
                                     const char *text,
                                     double *out,
                                     size_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LLM_ENSEMBLE_H */
