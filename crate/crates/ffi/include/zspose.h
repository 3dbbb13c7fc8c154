#ifndef ZSPOSE_H
#define ZSPOSE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ZsStatus {
  ZS_STATUS_OK = 0,
  ZS_STATUS_NULL_POINTER = 1,
  ZS_STATUS_INVALID_ARGUMENT = 2,
  ZS_STATUS_INVALID_GEOMETRY = 3,
  ZS_STATUS_DEGENERATE = 4,
  ZS_STATUS_NO_CONSENSUS = 5,
  ZS_STATUS_TOO_FEW_PAIRS = 6,
  ZS_STATUS_IO = 7,
  ZS_STATUS_BAD_FILE = 8,
  ZS_STATUS_BAD_MANIFEST = 9,
  ZS_STATUS_BUFFER_TOO_SMALL = 10,
  ZS_STATUS_INTERNAL = 11,
} ZsStatus;

// Pipeline settings, initialised to the defaults.
typedef struct ZsConfig ZsConfig;

// One frame loaded from a manifest: features, depth and camera.
typedef struct ZsFrame ZsFrame;

// A target sequence with every frame loaded, in manifest order.
typedef struct ZsSequence ZsSequence;

// Similarity `x ↦ scale · R x + t`, rotation row-major.
typedef struct ZsSim3 {
  double rotation[9];
  double translation[3];
  double scale;
} ZsSim3;

// Rigid transform, rotation row-major.
typedef struct ZsSe3 {
  double rotation[9];
  double translation[3];
} ZsSe3;

typedef struct ZsPointPair {
  double src[3];
  double dst[3];
} ZsPointPair;

typedef struct ZsRansacConfig {
  size_t max_iters;
  double inlier_thresh;
  size_t sample_size;
  uint64_t seed;
  size_t min_pairs;
} ZsRansacConfig;

typedef struct ZsPoseEstimate {
  struct ZsSim3 transform;
  size_t inlier_count;
  double rms_residual;
} ZsPoseEstimate;

// Pipeline output. `transform` maps reference-camera coordinates to the
// coordinates of target view `best_view`. `fallback` is 0 when RANSAC
// produced the transform and 1 when only the best view was used.
typedef struct ZsEstimate {
  struct ZsSim3 transform;
  size_t best_view;
  size_t inlier_count;
  size_t lifted_pairs;
  uint32_t fallback;
} ZsEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *zs_version(void);

// Message for the last failed call on this thread, or NULL after a
// successful call. Valid until the next call on the same thread.
const char *zs_last_error(void);

struct ZsSim3 zs_sim3_identity(void);

// `out = a ∘ b` (`b` applied first).
//
// # Safety
// Pointers must be valid or null.
enum ZsStatus zs_sim3_compose(const struct ZsSim3 *a, const struct ZsSim3 *b, struct ZsSim3 *out);

// # Safety
// Pointers must be valid or null.
enum ZsStatus zs_sim3_invert(const struct ZsSim3 *a, struct ZsSim3 *out);

// # Safety
// `point` and `out` must point to three doubles, `t` to a transform.
enum ZsStatus zs_sim3_apply(const struct ZsSim3 *t, const double *point, double *out);

// Angle in radians, in `[0, π]`, between two row-major rotation matrices.
//
// # Safety
// `r1` and `r2` must point to nine doubles.
enum ZsStatus zs_geodesic_error(const double *r1, const double *r2, double *out_rad);

// Ground-truth transform from camera `cam_ai` of sequence a to camera
// `cam_bj` of sequence b, given each sequence's category alignment.
//
// # Safety
// Pointers must be valid or null.
enum ZsStatus zs_relative_gt_pose(const struct ZsSim3 *t0a,
                                  const struct ZsSim3 *t0b,
                                  const struct ZsSe3 *cam_ai,
                                  const struct ZsSe3 *cam_bj,
                                  struct ZsSim3 *out);

// Least-squares similarity mapping every `src` onto its `dst`.
//
// # Safety
// `pairs` must point to `n` elements.
enum ZsStatus zs_umeyama(const struct ZsPointPair *pairs, size_t n, struct ZsSim3 *out);

struct ZsRansacConfig zs_ransac_config_default(void);

// Robust similarity fit. When `inliers` is non-null it must hold `n`
// entries; the first `out->inlier_count` receive the inlier indices in
// ascending order.
//
// # Safety
// `pairs` must point to `n` elements; other pointers valid or null.
enum ZsStatus zs_ransac(const struct ZsPointPair *pairs,
                        size_t n,
                        const struct ZsRansacConfig *cfg,
                        struct ZsPoseEstimate *out,
                        size_t *inliers);

// Loads frame `frame_id` of the sequence described by `manifest`.
//
// # Safety
// Strings must be NUL-terminated; `out` valid or null.
enum ZsStatus zs_frame_load(const char *manifest, const char *frame_id, struct ZsFrame **out);

// # Safety
// `frame` must come from [`zs_frame_load`] or be null.
void zs_frame_free(struct ZsFrame *frame);

// Feature grid shape of a loaded frame.
//
// # Safety
// Pointers must be valid or null.
enum ZsStatus zs_frame_grid_shape(const struct ZsFrame *frame,
                                  size_t *height,
                                  size_t *width,
                                  size_t *dim);

// Loads a target sequence and all of its frames.
//
// # Safety
// `manifest` must be NUL-terminated; `out` valid or null.
enum ZsStatus zs_sequence_load(const char *manifest, struct ZsSequence **out);

// # Safety
// `seq` must come from [`zs_sequence_load`] or be null.
void zs_sequence_free(struct ZsSequence *seq);

// # Safety
// Pointers must be valid or null.
enum ZsStatus zs_sequence_frame_count(const struct ZsSequence *seq, size_t *out);

// World-to-view extrinsics of frame `index`.
//
// # Safety
// Pointers must be valid or null.
enum ZsStatus zs_sequence_extrinsics(const struct ZsSequence *seq, size_t index, struct ZsSe3 *out);

struct ZsConfig *zs_config_new(void);

// # Safety
// `cfg` must come from [`zs_config_new`] or be null.
void zs_config_free(struct ZsConfig *cfg);

// # Safety
// `cfg` must be a live handle or null.
enum ZsStatus zs_config_set_k(struct ZsConfig *cfg, size_t k);

// Seeds RANSAC and k-means.
//
// # Safety
// `cfg` must be a live handle or null.
enum ZsStatus zs_config_set_seed(struct ZsConfig *cfg, uint64_t seed);

// # Safety
// `cfg` must be a live handle or null.
enum ZsStatus zs_config_set_ransac(struct ZsConfig *cfg, size_t iters, double inlier_thresh);

// `cyclical`, `mutual-nn`, `sinkhorn` or `dual-softmax`.
//
// # Safety
// `cfg` must be a live handle or null; `name` NUL-terminated.
enum ZsStatus zs_config_set_matcher(struct ZsConfig *cfg, const char *name);

// # Safety
// `cfg` must be a live handle or null.
enum ZsStatus zs_config_set_best_view_only(struct ZsConfig *cfg, bool on);

// # Safety
// `cfg` must be a live handle or null.
enum ZsStatus zs_config_set_min_inlier_fraction(struct ZsConfig *cfg, double fraction);

// Runs the full estimator. A null `cfg` uses the defaults.
//
// # Safety
// Handles must be live or null; `out` valid or null.
enum ZsStatus zs_estimate(const struct ZsFrame *reference,
                          const struct ZsSequence *target,
                          const struct ZsConfig *cfg,
                          struct ZsEstimate *out);

// Writes a feature file. `data` holds `height·width·dim` floats in
// row-major `(row, col, channel)` order. `foreground` (one byte per cell,
// nonzero = object) and `saliency` (one float per cell) may be null, in
// which case every cell is foreground with unit saliency.
//
// # Safety
// Buffers must hold the stated number of elements.
enum ZsStatus zs_write_features(const char *path,
                                size_t height,
                                size_t width,
                                size_t dim,
                                const float *data,
                                const uint8_t *foreground,
                                const float *saliency);

// Validates a `.zpf`, `.zdf` or manifest `.json` file. On success a
// one-line summary is copied into `buf` (NUL-terminated, truncated to
// `cap`) when `buf` is non-null.
//
// # Safety
// `path` must be NUL-terminated; `buf` must hold `cap` bytes or be null.
enum ZsStatus zs_check_file(const char *path, char *buf, size_t cap);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ZSPOSE_H */
