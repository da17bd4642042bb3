#ifndef DOMFORGE_H
#define DOMFORGE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum DfStatus {
  DF_STATUS_OK = 0,
  DF_STATUS_NULL_POINTER = 1,
  DF_STATUS_INVALID_UTF8 = 2,
  DF_STATUS_INVALID_ARGUMENT = 3,
  DF_STATUS_DATA_ERROR = 4,
  DF_STATUS_IO_ERROR = 5,
  DF_STATUS_PANIC = 6,
} DfStatus;

/**
 * Opaque paragraph corpus.
 */
typedef struct DfCorpus DfCorpus;

/**
 * Opaque similarity reference built from downstream-task examples.
 */
typedef struct DfTaskReference DfTaskReference;

/**
 * Masking parameters for [`df_mask_tokens`].
 */
typedef struct DfMaskingOptions {
  double mask_probability;
  double replace_mask_fraction;
  double replace_random_fraction;
  double keep_fraction;
  uint32_t mask_token_id;
  uint32_t vocab_size;
  uint64_t seed;
  /**
   * Selects the generator stream, so each sequence masks independently.
   */
  uint64_t sequence_index;
  /**
   * Ids never selected for masking; may be null when `n_special_ids` is 0.
   */
  const uint32_t *special_ids;
  size_t n_special_ids;
} DfMaskingOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next `df_*` call on the same thread.
 */
const char *df_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *df_version(void);

/**
 * # Safety
 * `s` must come from a `df_*` function of this library and not be freed twice.
 */
void df_string_free(char *s);

/**
 * Parses paragraph JSONL. Bad lines are skipped and counted in
 * `rejected_lines` (nullable); `source_default` may be null for "other".
 *
 * # Safety
 * String arguments must be NUL-terminated; `out` must be writable.
 */
enum DfStatus df_corpus_from_jsonl(const char *jsonl,
                                   const char *source_default,
                                   struct DfCorpus **out,
                                   size_t *rejected_lines);

/**
 * Number of paragraphs; 0 for a null handle.
 *
 * # Safety
 * `corpus` must be null or a live handle.
 */
size_t df_corpus_len(const struct DfCorpus *corpus);

/**
 * Canonical JSONL of the corpus.
 *
 * # Safety
 * `corpus` must be a live handle; `out` must be writable.
 */
enum DfStatus df_corpus_to_jsonl(const struct DfCorpus *corpus, char **out);

/**
 * New corpus without normalized-text duplicates; `removed` is nullable.
 *
 * # Safety
 * `corpus` must be a live handle; `out` must be writable.
 */
enum DfStatus df_corpus_dedupe(const struct DfCorpus *corpus,
                               struct DfCorpus **out,
                               size_t *removed);

/**
 * Per-source paragraph counts and word-count quantiles as JSON.
 *
 * # Safety
 * `corpus` must be a live handle; `out` must be writable.
 */
enum DfStatus df_corpus_stats_json(const struct DfCorpus *corpus, char **out);

/**
 * # Safety
 * `corpus` must be null or a handle not yet freed.
 */
void df_corpus_free(struct DfCorpus *corpus);

/**
 * Builds a task reference from JSONL examples with a "text" field.
 *
 * # Safety
 * `jsonl` must be NUL-terminated; `out` must be writable.
 */
enum DfStatus df_task_reference_from_jsonl(const char *jsonl,
                                           size_t vocab_size,
                                           struct DfTaskReference **out);

/**
 * # Safety
 * `task` must be null or a handle not yet freed.
 */
void df_task_reference_free(struct DfTaskReference *task);

/**
 * Runs a selection strategy ("full", "sim", "div", "div_plus_sim").
 * `scores_jsonl` receives one score record per paragraph; `selected`
 * (nullable) receives the kept paragraphs. `task` may be null for "full"
 * and "div".
 *
 * # Safety
 * Handles must be live; `strategy` NUL-terminated; `scores_jsonl` writable.
 */
enum DfStatus df_select_json(const struct DfCorpus *corpus,
                             const char *strategy,
                             double keep_fraction,
                             const struct DfTaskReference *task,
                             char **scores_jsonl,
                             struct DfCorpus **selected);

/**
 * Type-token ratio plus entropy (bits) of a text.
 *
 * # Safety
 * `text` must be NUL-terminated; `out` must be writable.
 */
enum DfStatus df_diversity_score(const char *text, double *out);

/**
 * Support-weighted F1 over integer class labels.
 *
 * # Safety
 * Both arrays must hold `n` elements; `out` must be writable.
 */
enum DfStatus df_weighted_f1(const uint32_t *y_true, const uint32_t *y_pred, size_t n, double *out);

/**
 * Mean cross-entropy (nats) of `n` row-major distributions over `k`
 * classes. `clamped` (nullable) receives how many true-class
 * probabilities were raised to `epsilon`.
 *
 * # Safety
 * `probabilities` must hold `n * k` values and `y_true` `n`; `out` writable.
 */
enum DfStatus df_cross_entropy(const double *probabilities,
                               size_t n,
                               size_t k,
                               const size_t *y_true,
                               double epsilon,
                               double *out,
                               size_t *clamped);

/**
 * # Safety
 * `out` must be writable.
 */
enum DfStatus df_error_rate_reduction(double baseline_f1, double model_f1, double *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum DfStatus df_relative_loss_reduction(double baseline_loss, double model_loss, double *out);

/**
 * Grams CO2e for power (kW) × hours × grid intensity (g/kWh).
 *
 * # Safety
 * `out` must be writable.
 */
enum DfStatus df_co2_emissions(double power_kw,
                               double hours,
                               double grid_intensity_g_per_kwh,
                               double *out);

/**
 * Masks `n` token ids. `out_ids` receives the corrupted sequence and
 * `out_labels` the original id at predicted positions and -100 elsewhere.
 *
 * # Safety
 * `ids`, `out_ids` and `out_labels` must hold `n` elements; `opts` must be
 * valid, with `special_ids` holding `n_special_ids` elements.
 */
enum DfStatus df_mask_tokens(const uint32_t *ids,
                             size_t n,
                             const struct DfMaskingOptions *opts,
                             uint32_t *out_ids,
                             int64_t *out_labels);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DOMFORGE_H */
