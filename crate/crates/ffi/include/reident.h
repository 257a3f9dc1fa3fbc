#ifndef REIDENT_H
#define REIDENT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum ReidentStatus {
  REIDENT_STATUS_OK = 0,
  REIDENT_STATUS_NULL_POINTER = 1,
  REIDENT_STATUS_INVALID_UTF8 = 2,
  REIDENT_STATUS_IO = 3,
  REIDENT_STATUS_PARSE = 4,
  REIDENT_STATUS_DIMENSION_MISMATCH = 5,
  REIDENT_STATUS_ZERO_NORM_VECTOR = 6,
  REIDENT_STATUS_INVALID_ARGUMENT = 7,
  REIDENT_STATUS_BAD_QUERY = 8,
  REIDENT_STATUS_UNKNOWN_TRACK = 9,
  REIDENT_STATUS_MISSING_TRACK_ID = 10,
  REIDENT_STATUS_MISSING_QUALITY = 11,
  REIDENT_STATUS_OTHER = 12,
  REIDENT_STATUS_PANIC = 13,
} ReidentStatus;

typedef struct ReidentGallery ReidentGallery;

typedef struct ReidentHead ReidentHead;

typedef struct ReidentIndex ReidentIndex;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. Owned by the
// library; valid until the next failing call on this thread.
const char *reident_last_error(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void reident_string_free(char *s);

// `(cos(a, b) + 1) / 2` of two `len`-element vectors.
//
// # Safety
// `a` and `b` must point to `len` readable floats; `out` must be writable.
enum ReidentStatus reident_match_score(const float *a, const float *b, size_t len, double *out);

// Loads a gallery; `.egal` files are binary, anything else JSONL.
//
// # Safety
// `path` must be a nul-terminated string; `out` must be writable.
enum ReidentStatus reident_gallery_load(const char *path, struct ReidentGallery **out);

// Number of records; 0 for a null handle.
//
// # Safety
// `g` must be null or a live gallery handle.
size_t reident_gallery_len(const struct ReidentGallery *g);

// Vector dimension; 0 for a null handle.
//
// # Safety
// `g` must be null or a live gallery handle.
size_t reident_gallery_dimension(const struct ReidentGallery *g);

// # Safety
// `g` must be null or a gallery handle not yet freed.
void reident_gallery_free(struct ReidentGallery *g);

// Loads a head file.
//
// # Safety
// `path` must be a nul-terminated string; `out` must be writable.
enum ReidentStatus reident_head_load(const char *path, struct ReidentHead **out);

// # Safety
// `h` must be null or a live head handle.
size_t reident_head_class_count(const struct ReidentHead *h);

// # Safety
// `h` must be null or a live head handle.
size_t reident_head_dimension(const struct ReidentHead *h);

// Label of class `k` as a new string (free with `reident_string_free`).
//
// # Safety
// `h` must be a live head handle; `out` must be writable.
enum ReidentStatus reident_head_label(const struct ReidentHead *h, size_t k, char **out);

// Rank-1 class index and score of `x`.
//
// # Safety
// `h` must be a live head handle, `x` must point to `len` floats and the
// out-pointers must be writable.
enum ReidentStatus reident_head_predict(const struct ReidentHead *h,
                                        const float *x,
                                        size_t len,
                                        size_t *out_class,
                                        double *out_score);

// # Safety
// `h` must be null or a head handle not yet freed.
void reident_head_free(struct ReidentHead *h);

// Builds a re-identification index of a video gallery.
//
// # Safety
// `g` and `h` must be live handles; `out` must be writable.
enum ReidentStatus reident_index_build(const struct ReidentGallery *g,
                                       const struct ReidentHead *h,
                                       struct ReidentIndex **out);

// # Safety
// `path` must be a nul-terminated string; `out` must be writable.
enum ReidentStatus reident_index_load(const char *path, struct ReidentIndex **out);

// Writes the index atomically (temporary file, then rename).
//
// # Safety
// `idx` must be a live handle; `path` a nul-terminated string.
enum ReidentStatus reident_index_save(const struct ReidentIndex *idx, const char *path);

// # Safety
// `idx` must be null or a live index handle.
size_t reident_index_track_count(const struct ReidentIndex *idx);

// Runs a search given as JSON (`{"make", "model", "color", "minScore",
// "limit"}`, all optional but one filter required) and returns the result
// as a new JSON string.
//
// # Safety
// `idx` must be a live handle, `query_json` a nul-terminated string and
// `out_json` writable.
enum ReidentStatus reident_index_search_json(const struct ReidentIndex *idx,
                                             const char *query_json,
                                             char **out_json);

// Member detections of a track, ordered by frame, as a new JSON string.
//
// # Safety
// `idx` must be a live handle, `track_id` a nul-terminated string and
// `out_json` writable.
enum ReidentStatus reident_index_track_json(const struct ReidentIndex *idx,
                                            const char *track_id,
                                            char **out_json);

// # Safety
// `idx` must be null or an index handle not yet freed.
void reident_index_free(struct ReidentIndex *idx);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REIDENT_H */
