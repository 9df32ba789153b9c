#ifndef ADAPTIVE_K_H
#define ADAPTIVE_K_H

/* Generated by cbindgen from crates/ffi. Do not edit. */

#include <stddef.h>
#include <stdint.h>
#include <stdbool.h>

typedef enum AkStatus {
  AK_STATUS_OK = 0,
  AK_STATUS_NULL_POINTER = 1,
  AK_STATUS_INVALID_ARGUMENT = 2,
  AK_STATUS_IO = 3,
  AK_STATUS_PARSE = 4,
  AK_STATUS_EMPTY_CORPUS = 5,
  AK_STATUS_MISSING_LABELS = 6,
  AK_STATUS_DIMENSION_MISMATCH = 7,
  AK_STATUS_PANIC = 99,
} AkStatus;

/**
 * A loaded corpus.
 */
typedef struct AkCorpus AkCorpus;

/**
 * Similarity scores of one query against a corpus, sorted.
 */
typedef struct AkProfile AkProfile;

/**
 * A retrieved chunk set.
 */
typedef struct AkSelection AkSelection;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * Valid until the next call into this library on the same thread.
 */
const char *ak_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ak_version(void);

/**
 * Loads a line-delimited JSON chunk file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum AkStatus ak_corpus_load(const char *path, struct AkCorpus **out);

/**
 * # Safety
 * `corpus` must be null or a handle from [`ak_corpus_load`] not yet freed.
 */
void ak_corpus_free(struct AkCorpus *corpus);

/**
 * Number of chunks; 0 for a null handle.
 *
 * # Safety
 * `corpus` must be null or a live handle.
 */
size_t ak_corpus_len(const struct AkCorpus *corpus);

/**
 * # Safety
 * `corpus` must be null or a live handle.
 */
uint64_t ak_corpus_total_tokens(const struct AkCorpus *corpus);

/**
 * Builds a profile from `n` scores given in corpus order.
 *
 * # Safety
 * `scores` must point to `n` doubles; `corpus` must be live; `out` writable.
 */
enum AkStatus ak_profile_from_scores(const struct AkCorpus *corpus,
                                     const double *scores,
                                     size_t n,
                                     struct AkProfile **out);

/**
 * Scores `query` (length `dim`) against the corpus rows stored in the
 * embedding cache at `cache_path`.
 *
 * # Safety
 * `query` must point to `dim` floats; pointers must be valid as documented
 * for [`ak_profile_from_scores`].
 */
enum AkStatus ak_profile_from_cache(const struct AkCorpus *corpus,
                                    const char *cache_path,
                                    const float *query,
                                    size_t dim,
                                    struct AkProfile **out);

/**
 * # Safety
 * `profile` must be null or a live handle.
 */
void ak_profile_free(struct AkProfile *profile);

/**
 * Writes the descending scores into `out` (capacity `cap`); returns the
 * profile length regardless of `cap`.
 *
 * # Safety
 * `out` must point to `cap` writable doubles (may be null when `cap` is 0).
 */
size_t ak_profile_sorted_scores(const struct AkProfile *profile, double *out, size_t cap);

/**
 * Applies a strategy spec such as `adaptive`, `adaptive:B=5,frac=0.9`,
 * `fixedk:10`, `fixedtok:5000`, `full`, `zeroshot` or
 * `selfroute:budget=5000,oracle=label-heuristic`. `query_id` may be null.
 *
 * # Safety
 * String arguments must be NUL-terminated; handles must be live.
 */
enum AkStatus ak_select(const struct AkProfile *profile,
                        const struct AkCorpus *corpus,
                        const char *strategy,
                        const char *query_id,
                        struct AkSelection **out);

/**
 * # Safety
 * `selection` must be null or a live handle.
 */
void ak_selection_free(struct AkSelection *selection);

/**
 * # Safety
 * `selection` must be null or a live handle.
 */
size_t ak_selection_len(const struct AkSelection *selection);

/**
 * Cutoff position; -1 for an empty selection or a null handle.
 *
 * # Safety
 * `selection` must be null or a live handle.
 */
int64_t ak_selection_cutoff_k(const struct AkSelection *selection);

/**
 * # Safety
 * `selection` must be null or a live handle.
 */
uint64_t ak_selection_tokens(const struct AkSelection *selection);

/**
 * Gap position and size; `AK_STATUS_INVALID_ARGUMENT` for non-adaptive
 * selections.
 *
 * # Safety
 * `selection` must be live; out pointers writable.
 */
enum AkStatus ak_selection_gap(const struct AkSelection *selection,
                               size_t *gap_index,
                               double *gap_value);

/**
 * Id of the `i`-th selected chunk, or null when out of range. Owned by the
 * selection.
 *
 * # Safety
 * `selection` must be null or a live handle.
 */
const char *ak_selection_id(const struct AkSelection *selection, size_t i);

/**
 * # Safety
 * Handles must be live; `out` writable.
 */
enum AkStatus ak_context_recall(const struct AkSelection *selection,
                                const struct AkCorpus *corpus,
                                double *out);

/**
 * # Safety
 * Handles must be live; `out` writable.
 */
enum AkStatus ak_diff_k(const struct AkSelection *selection,
                        const struct AkProfile *profile,
                        const struct AkCorpus *corpus,
                        uint64_t *out);

/**
 * Adaptive cutoff on an already sorted (descending) score array, without
 * any corpus. Writes the gap position and the number of chunks to keep
 * (gap position + 1 + buffer, capped at `n`).
 *
 * # Safety
 * `sorted_desc` must point to `n` doubles; out pointers writable.
 */
enum AkStatus ak_adaptive_cutoff(const double *sorted_desc,
                                 size_t n,
                                 size_t buffer,
                                 double search_fraction,
                                 size_t *gap_index,
                                 size_t *keep);

/**
 * Cosine similarity of `query` against `n` row-major rows of length `dim`.
 *
 * # Safety
 * `query` must hold `dim` floats, `rows` `n * dim` floats and `out` room
 * for `n` doubles.
 */
enum AkStatus ak_cosine_scores(const float *query,
                               const float *rows,
                               size_t n,
                               size_t dim,
                               double *out);

/**
 * Percentage of the full context saved by sending `n_input` tokens.
 *
 * # Safety
 * `out` must be writable.
 */
enum AkStatus ak_token_reduction(double n_input, double n_full, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ADAPTIVE_K_H */
