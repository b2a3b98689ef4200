#ifndef BIDB_H
#define BIDB_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes. Data and numeric codes match the CLI exit codes.
typedef enum BidbStatus {
  BIDB_STATUS_OK = 0,
  // Null pointer, bad UTF-8, wrong buffer length or index out of range.
  BIDB_STATUS_INVALID_ARGUMENT = 2,
  // Malformed input, dimension mismatch or I/O failure.
  BIDB_STATUS_DATA = 3,
  // Non-finite values, degenerate vectors, undefined metrics.
  BIDB_STATUS_NUMERIC = 4,
  // A Rust panic was caught at the boundary.
  BIDB_STATUS_INTERNAL = 5,
} BidbStatus;

// Trained identity head.
typedef struct BidbHead BidbHead;

// Probe x gallery score matrix with optional ground truth.
typedef struct BidbMatrix BidbMatrix;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *bidb_version(void);

// Copies the calling thread's last error message into `buf`, truncated
// and NUL-terminated. Returns the full message length in bytes, excluding
// the terminator; 0 when no error has been recorded.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t bidb_last_error(char *buf, size_t len);

// Loads an identity head from a `BIDH` file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum BidbStatus bidb_head_load(const char *path, struct BidbHead **out);

// # Safety
// `head` must be null or a handle from [`bidb_head_load`] not yet freed.
void bidb_head_free(struct BidbHead *head);

// Input feature width; 0 for a null handle.
//
// # Safety
// `head` must be null or a live handle.
size_t bidb_head_input_dim(const struct BidbHead *head);

// Embedding width; 0 for a null handle.
//
// # Safety
// `head` must be null or a live handle.
size_t bidb_head_embedding_dim(const struct BidbHead *head);

// Embeds `frames` row-major feature vectors into `out`, which must hold
// exactly `frames * embedding_dim` values.
//
// # Safety
// `features` must point to `frames * input_dim` readable doubles and `out`
// to `out_len` writable doubles.
enum BidbStatus bidb_head_embed(const struct BidbHead *head,
                                const double *features,
                                size_t frames,
                                double *out,
                                size_t out_len);

// Cosine similarity of two `len`-vectors, clamped to [-1, 1].
//
// # Safety
// `a` and `b` must point to `len` readable doubles; `out` must be writable.
enum BidbStatus bidb_cosine(const double *a, const double *b, size_t len, double *out);

// Loads a score matrix: `.bids` as binary, anything else as CSV.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum BidbStatus bidb_matrix_load(const char *path, struct BidbMatrix **out);

// Writes a score matrix: `.bids` as binary, anything else as CSV.
//
// # Safety
// `matrix` must be a live handle; `path` a NUL-terminated string.
enum BidbStatus bidb_matrix_save(const struct BidbMatrix *matrix, const char *path);

// # Safety
// `matrix` must be null or a live handle.
void bidb_matrix_free(struct BidbMatrix *matrix);

// Number of probe rows; 0 for a null handle.
//
// # Safety
// `matrix` must be null or a live handle.
size_t bidb_matrix_probes(const struct BidbMatrix *matrix);

// Number of gallery columns; 0 for a null handle.
//
// # Safety
// `matrix` must be null or a live handle.
size_t bidb_matrix_gallery(const struct BidbMatrix *matrix);

// Number of mated probes; 0 without ground truth.
//
// # Safety
// `matrix` must be null or a live handle.
size_t bidb_matrix_mated(const struct BidbMatrix *matrix);

// Score of probe row `probe` against gallery column `gallery`, both in
// sorted-id order.
//
// # Safety
// `matrix` must be a live handle; `out` must be writable.
enum BidbStatus bidb_matrix_score(const struct BidbMatrix *matrix,
                                  size_t probe,
                                  size_t gallery,
                                  double *out);

// Averages two matrices over identical probe and gallery ids.
//
// # Safety
// `a` and `b` must be live handles; `out` must be writable.
enum BidbStatus bidb_matrix_fuse(const struct BidbMatrix *a,
                                 const struct BidbMatrix *b,
                                 struct BidbMatrix **out);

// CMC hit rates at ranks `1..=len` into `out`. Ranks past the gallery
// size repeat the final value of 1.
//
// # Safety
// `matrix` must be a live handle; `out` must point to `len` writable doubles.
enum BidbStatus bidb_matrix_cmc(const struct BidbMatrix *matrix, double *out, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BIDB_H */
