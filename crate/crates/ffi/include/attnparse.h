#ifndef ATTNPARSE_H
#define ATTNPARSE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum ApStatus {
  AP_STATUS_OK = 0,
  AP_STATUS_NULL_POINTER = 1,
  AP_STATUS_INVALID_UTF8 = 2,
  AP_STATUS_IO = 3,
  AP_STATUS_INVALID_ARCHIVE = 4,
  AP_STATUS_OUT_OF_RANGE = 5,
  AP_STATUS_PARSE = 6,
  AP_STATUS_EVALUATION = 7,
  AP_STATUS_BUFFER_TOO_SMALL = 8,
  AP_STATUS_PANIC = 9,
} ApStatus;

typedef enum ApMeasure {
  AP_MEASURE_HELLINGER = 0,
  AP_MEASURE_JENSEN_SHANNON = 1,
} ApMeasure;

// Opaque archive handle.
typedef struct ApArchive ApArchive;

// A head: `archive` indexes the array passed alongside; `layer` and
// `head` count from 1.
typedef struct ApHead {
  uint32_t archive;
  uint32_t layer;
  uint32_t head;
} ApHead;

// Corpus-level evaluation summary.
typedef struct ApEvaluation {
  double corpus_f1;
  size_t sentences;
  size_t scored;
  size_t skipped;
} ApEvaluation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Last error message on this thread, or null. Valid until the next failing
// call on the same thread.
const char *ap_last_error(void);

// Library version as a static string.
const char *ap_version(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void ap_string_free(char *s);

// Reads and validates an archive file.
//
// # Safety
// `path` must be a nul-terminated string; `out` must be writable.
enum ApStatus ap_archive_open(const char *path, struct ApArchive **out);

// Parses and validates an archive held in memory.
//
// # Safety
// `data` must point to `len` readable bytes; `out` must be writable.
enum ApStatus ap_archive_from_bytes(const uint8_t *data, size_t len, struct ApArchive **out);

// Releases an archive handle. Null is ignored.
//
// # Safety
// `archive` must come from this library and not have been freed.
void ap_archive_free(struct ApArchive *archive);

// Number of layers, or 0 for a null handle.
//
// # Safety
// `archive` must be null or a live handle.
size_t ap_archive_num_layers(const struct ApArchive *archive);

// Heads per layer, or 0 for a null handle.
//
// # Safety
// `archive` must be null or a live handle.
size_t ap_archive_num_heads(const struct ApArchive *archive);

// Number of sentences, or 0 for a null handle.
//
// # Safety
// `archive` must be null or a live handle.
size_t ap_archive_num_sentences(const struct ApArchive *archive);

// Word count of the sentence at `index`.
//
// # Safety
// `archive` must be a live handle; `out` must be writable.
enum ApStatus ap_archive_sentence_length(const struct ApArchive *archive,
                                         size_t index,
                                         size_t *out);

// Model id into `buf` (nul-terminated). `needed` receives the required
// size including the terminator, also when the buffer is too small.
//
// # Safety
// `archive` must be a live handle; `buf` must hold `cap` bytes or be null
// with `cap == 0`; `needed` may be null.
enum ApStatus ap_archive_model_id(const struct ApArchive *archive,
                                  char *buf,
                                  size_t cap,
                                  size_t *needed);

// Decodes one head on one sentence into a bracketed tree. `words` may be
// null, in which case leaves are named `w1 .. wz`. The result is released
// with `ap_string_free`.
//
// # Safety
// `archive` must be a live handle; `words` must be null or hold
// `word_count` nul-terminated strings; `out` must be writable.
enum ApStatus ap_decode_head(const struct ApArchive *archive,
                             size_t sentence,
                             uint32_t layer,
                             uint32_t head,
                             enum ApMeasure measure,
                             const char *const *words,
                             size_t word_count,
                             char **out);

// Syntactic distance vector (`z - 1` values) of one head's decoded tree.
// `len` receives the vector length, also when `cap` is too small.
//
// # Safety
// `archive` must be a live handle; `buf` must hold `cap` doubles or be
// null with `cap == 0`; `len` must be writable.
enum ApStatus ap_head_distances(const struct ApArchive *archive,
                                size_t sentence,
                                uint32_t layer,
                                uint32_t head,
                                enum ApMeasure measure,
                                double *buf,
                                size_t cap,
                                size_t *len);

// Ensemble parse of sentence `sentence` (an index, aligned across
// archives) with the given heads.
//
// # Safety
// `archives` must hold `archive_count` live handles, `heads` must hold
// `head_count` entries, `words` as for `ap_decode_head`, `out` writable.
enum ApStatus ap_ensemble_parse(const struct ApArchive *const *archives,
                                size_t archive_count,
                                const struct ApHead *heads,
                                size_t head_count,
                                size_t sentence,
                                enum ApMeasure measure,
                                bool rank_normalize,
                                const char *const *words,
                                size_t word_count,
                                char **out);

// Scores predicted trees (one bracketed tree per line) against a gold
// treebank in bracketed form, with default preprocessing. Sentences with
// no gold spans are skipped.
//
// # Safety
// `pred` and `gold` must be nul-terminated; `out` must be writable.
enum ApStatus ap_evaluate(const char *pred, const char *gold, struct ApEvaluation *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ATTNPARSE_H */
