#ifndef NLGP_H
#define NLGP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>
#include <stdbool.h>

// Result of every fallible entry point.
typedef enum NlgpStatus {
  NLGP_STATUS_OK = 0,
  NLGP_STATUS_NULL_POINTER = 1,
  NLGP_STATUS_INVALID_UTF8 = 2,
  NLGP_STATUS_INVALID_ARGUMENT = 3,
  NLGP_STATUS_IO = 4,
  NLGP_STATUS_FORMAT = 5,
  NLGP_STATUS_BACKEND = 6,
  NLGP_STATUS_STAGE_FAILED = 7,
  NLGP_STATUS_PANIC = 8,
} NlgpStatus;

// Callable-entity to docstring-title mapping.
typedef struct NlgpMapping NlgpMapping;

// Trained n-gram next-token model.
typedef struct NlgpModel NlgpModel;

// Byte-level BPE tokenizer with the pipeline's special tokens.
typedef struct NlgpTokenizer NlgpTokenizer;

typedef struct NlgpPairScore {
  double bleu;
  double bleu_smoothed;
  double iou;
} NlgpPairScore;

typedef struct NlgpDecodeOptions {
  size_t beam_width;
  size_t min_tokens;
  size_t max_tokens;
  size_t max_context;
} NlgpDecodeOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *nlgp_version(void);

// Message of the last failed call on this thread, or NULL after a
// successful one. Valid until the next library call on the same thread.
const char *nlgp_last_error(void);

// # Safety
// `s` must be NULL or a string returned by this library and not yet freed.
void nlgp_string_free(char *s);

// # Safety
// `ids`/`len` must be NULL/0 or a buffer returned by [`nlgp_tokenizer_encode`]
// and not yet freed.
void nlgp_tokens_free(uint32_t *ids, size_t len);

// Load `merges.txt` plus `vocab.txt` or `vocab.json` from `dir`.
//
// # Safety
// `dir` must be a NUL-terminated string; `out` must be writable.
enum NlgpStatus nlgp_tokenizer_load(const char *dir, struct NlgpTokenizer **out);

// # Safety
// `tok` must be NULL or a live handle from [`nlgp_tokenizer_load`].
void nlgp_tokenizer_free(struct NlgpTokenizer *tok);

// Vocabulary size, or 0 for a NULL handle.
//
// # Safety
// `tok` must be NULL or a live handle.
size_t nlgp_tokenizer_vocab_size(const struct NlgpTokenizer *tok);

// Encode `text`; the id buffer goes to `out_ids`/`out_len` and is released
// with [`nlgp_tokens_free`].
//
// # Safety
// `tok` must be a live handle, `text` NUL-terminated, outputs writable.
enum NlgpStatus nlgp_tokenizer_encode(const struct NlgpTokenizer *tok,
                                      const char *text_in,
                                      uint32_t **out_ids,
                                      size_t *out_len);

// Decode `len` ids into a newly allocated string.
//
// # Safety
// `ids` must point to `len` readable ids (or be NULL with `len == 0`).
enum NlgpStatus nlgp_tokenizer_decode(const struct NlgpTokenizer *tok,
                                      const uint32_t *ids,
                                      size_t len,
                                      char **out_text);

// Load a JSONL mapping file.
//
// # Safety
// `path` must be NUL-terminated; `out` writable.
enum NlgpStatus nlgp_mapping_load(const char *path, struct NlgpMapping **out);

// # Safety
// `mapping` must be NULL or a live handle.
void nlgp_mapping_free(struct NlgpMapping *mapping);

// Number of entries, or 0 for a NULL handle.
//
// # Safety
// `mapping` must be NULL or a live handle.
size_t nlgp_mapping_len(const struct NlgpMapping *mapping);

// Insert docstring comments above a random `rate` share of the resolvable
// call sites of `source`. With `strip_comments` nonzero, existing comments
// are removed first. `out_injected` (optional) receives the comment count.
//
// # Safety
// Handles live, strings NUL-terminated, `out_text` writable.
enum NlgpStatus nlgp_inject(const struct NlgpMapping *mapping,
                            const char *source,
                            double rate,
                            uint64_t seed,
                            bool strip_comments,
                            char **out_text,
                            size_t *out_injected);

// Lexical tokens of `code`, joined by single spaces.
//
// # Safety
// `code` NUL-terminated, `out_text` writable.
enum NlgpStatus nlgp_lex_code(const char *code, char **out_text);

// BLEU (plain and smoothed) and IoU of a prediction against a reference.
//
// # Safety
// Strings NUL-terminated, `out` writable.
enum NlgpStatus nlgp_score_pair(const char *prediction,
                                const char *reference,
                                struct NlgpPairScore *out);

// Load an n-gram model written by the `train-lm` stage.
//
// # Safety
// `path` NUL-terminated, `out` writable.
enum NlgpStatus nlgp_model_load(const char *path, struct NlgpModel **out);

// # Safety
// `model` must be NULL or a live handle.
void nlgp_model_free(struct NlgpModel *model);

struct NlgpDecodeOptions nlgp_decode_options_default(void);

// Predict the code following `context` for the intent comment `intent`
// (indented by `intent_prefix`, which may be NULL). Writes the best
// prediction and, if `out_score` is non-NULL, its log-probability.
//
// # Safety
// Handles live, strings NUL-terminated, `opts` NULL or readable,
// `out_text` writable.
enum NlgpStatus nlgp_predict(const struct NlgpModel *model,
                             const struct NlgpTokenizer *tok,
                             const char *context,
                             const char *intent,
                             const char *intent_prefix,
                             const struct NlgpDecodeOptions *opts,
                             char **out_text,
                             double *out_score);

// Run one pipeline stage (named as on the command line, e.g. `bench-mine`)
// with the configuration file at `config_path`.
//
// # Safety
// Strings NUL-terminated.
enum NlgpStatus nlgp_run_stage(const char *config_path, const char *stage);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NLGP_H */
