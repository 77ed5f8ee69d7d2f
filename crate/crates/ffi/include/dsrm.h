#ifndef DSRM_H
#define DSRM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum DsrmStatus {
  DSRM_STATUS_OK = 0,
  DSRM_STATUS_NULL_ARGUMENT = 1,
  DSRM_STATUS_INVALID_UTF8 = 2,
  DSRM_STATUS_IO = 3,
  DSRM_STATUS_PARSE = 4,
  DSRM_STATUS_INVALID_GRAPH = 5,
  DSRM_STATUS_UNKNOWN_ENTITY = 6,
  DSRM_STATUS_INVALID_INPUT = 7,
  DSRM_STATUS_NON_FINITE = 8,
  DSRM_STATUS_CHECKPOINT = 9,
  DSRM_STATUS_BUFFER_TOO_SMALL = 10,
  DSRM_STATUS_PANIC = 11,
} DsrmStatus;

// Loaded knowledge graph.
typedef struct DsrmKg DsrmKg;

// Trained network applied to every entity of a graph.
typedef struct DsrmModel DsrmModel;

// tf-idf vectors of every entity of a graph.
typedef struct DsrmTfIdf DsrmTfIdf;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL after a
// successful one. Valid until the next call into this library on the same
// thread.
const char *dsrm_last_error_message(void);

// Library version as a static nul-terminated string.
const char *dsrm_version(void);

// Loads a `kg.jsonl` file.
//
// # Safety
// `path` must be a nul-terminated string; `out` must be writable.
enum DsrmStatus dsrm_kg_load(const char *path, struct DsrmKg **out);

// # Safety
// `kg` must be NULL or a handle from [`dsrm_kg_load`] not yet freed.
void dsrm_kg_free(struct DsrmKg *kg);

// Number of entities, 0 for a NULL handle.
//
// # Safety
// `kg` must be NULL or a live handle.
size_t dsrm_kg_len(const struct DsrmKg *kg);

// Link-overlap relatedness of two entities.
//
// # Safety
// `kg` must be a live handle, `a` and `b` nul-terminated ids, `out` writable.
enum DsrmStatus dsrm_ngd(const struct DsrmKg *kg, const char *a, const char *b, double *out);

// Builds tf-idf vectors for every entity of `kg`. The result does not
// borrow `kg`.
//
// # Safety
// `kg` must be a live handle and `out` writable.
enum DsrmStatus dsrm_tfidf_build(const struct DsrmKg *kg, struct DsrmTfIdf **out);

// # Safety
// `model` must be NULL or a handle from [`dsrm_tfidf_build`] not yet freed.
void dsrm_tfidf_free(struct DsrmTfIdf *model);

// Cosine of the tf-idf vectors of two entities.
//
// # Safety
// `model` must be a live handle, `a` and `b` nul-terminated ids, `out`
// writable.
enum DsrmStatus dsrm_vsp(const struct DsrmTfIdf *model, const char *a, const char *b, double *out);

// Loads a trained checkpoint and embeds every entity of `kg`. The result
// does not borrow `kg`.
//
// # Safety
// `kg` must be a live handle, `checkpoint` a nul-terminated path and `out`
// writable.
enum DsrmStatus dsrm_model_load(const struct DsrmKg *kg,
                                const char *checkpoint,
                                struct DsrmModel **out);

// # Safety
// `model` must be NULL or a handle from [`dsrm_model_load`] not yet freed.
void dsrm_model_free(struct DsrmModel *model);

// Width of the entity embeddings, 0 for a NULL handle.
//
// # Safety
// `model` must be NULL or a live handle.
size_t dsrm_model_output_dim(const struct DsrmModel *model);

// Smoothing factor stored with the checkpoint, NaN for a NULL handle.
//
// # Safety
// `model` must be NULL or a live handle.
double dsrm_model_gamma(const struct DsrmModel *model);

// Network relatedness of two entities: embedding cosine clamped to [0, 1].
//
// # Safety
// `model` must be a live handle, `a` and `b` nul-terminated ids, `out`
// writable.
enum DsrmStatus dsrm_model_relatedness(const struct DsrmModel *model,
                                       const char *a,
                                       const char *b,
                                       double *out);

// Copies the embedding of `id` into `buf`, which must hold at least
// [`dsrm_model_output_dim`] values; `len` is its capacity.
//
// # Safety
// `model` must be a live handle, `id` a nul-terminated id and `buf` valid
// for `len` writes.
enum DsrmStatus dsrm_model_embedding(const struct DsrmModel *model,
                                     const char *id,
                                     double *buf,
                                     size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DSRM_H */
