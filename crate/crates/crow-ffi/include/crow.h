#ifndef CROW_H
#define CROW_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of a crow call. `CROW_STATUS_OK` is zero; everything else is an
 * error and leaves a message retrievable via `crow_last_error_message`.
 */
typedef enum {
  CROW_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  CROW_STATUS_NULL_ARGUMENT = 1,
  /**
   * A parameter was outside its documented range.
   */
  CROW_STATUS_INVALID_ARGUMENT = 2,
  /**
   * An index was out of bounds for the addressed collection.
   */
  CROW_STATUS_OUT_OF_RANGE = 3,
  /**
   * Input data failed to parse or validate.
   */
  CROW_STATUS_INVALID_DATA = 4,
  /**
   * The underlying file operation failed.
   */
  CROW_STATUS_IO_ERROR = 5,
  /**
   * The pipeline finished but some images failed; outputs cover the rest.
   */
  CROW_STATUS_PARTIAL_FAILURE = 6,
} CrowStatus;

/**
 * Opaque tile-layout handle; create with `crow_layout_compute`, release
 * with `crow_layout_free`.
 */
typedef struct CrowLayout CrowLayout;

/**
 * Parameters of the tiling pipeline. Obtain defaults with
 * `crow_tiling_config_default` and override selectively.
 */
typedef struct {
  /**
   * Tile side length in pixels.
   */
  uint32_t alpha;
  /**
   * Minimum relative overlap between adjacent tiles, in [0, 1).
   */
  double beta;
  /**
   * Full-frame down-scaling factor, in (0, 1].
   */
  double gamma;
  /**
   * Fraction of a box's area that must survive clipping, in [0, 1].
   */
  double min_visibility;
  /**
   * Non-zero to append a down-scaled full frame per image.
   */
  uint8_t include_full_frame;
} CrowTilingConfig;

/**
 * One crop window of a tile layout.
 */
typedef struct {
  uint32_t row;
  uint32_t col;
  uint32_t x;
  uint32_t y;
  uint32_t w;
  uint32_t h;
} CrowTile;

/**
 * Axis-aligned box, x/y is the top-left corner, in pixels.
 */
typedef struct {
  double x;
  double y;
  double w;
  double h;
} CrowBox;

/**
 * A scored, categorised detection in image coordinates.
 */
typedef struct {
  CrowBox bbox;
  uint64_t category_id;
  double score;
} CrowDetection;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last error on this thread, or null when the last
 * call succeeded. The pointer stays valid until the next crow call on the
 * same thread; do not free it.
 */
const char *crow_last_error_message(void);

/**
 * Fill `out` with the default pipeline parameters.
 */
CrowStatus crow_tiling_config_default(CrowTilingConfig *out);

/**
 * Compute the corner-anchored overlapping layout for one image and store
 * a handle in `out`.
 */
CrowStatus crow_layout_compute(uint32_t image_width,
                               uint32_t image_height,
                               uint32_t alpha,
                               double beta,
                               CrowLayout **out);

/**
 * Release a layout handle. Null is accepted and ignored.
 */
void crow_layout_free(CrowLayout *layout);

/**
 * Number of tiles in the layout; 0 for a null handle.
 */
uintptr_t crow_layout_tile_count(const CrowLayout *layout);

/**
 * Number of tile rows in the layout; 0 for a null handle.
 */
uint32_t crow_layout_rows(const CrowLayout *layout);

/**
 * Number of tile columns in the layout; 0 for a null handle.
 */
uint32_t crow_layout_cols(const CrowLayout *layout);

/**
 * Copy the tile at `index` (row-major order) into `out`.
 */
CrowStatus crow_layout_tile(const CrowLayout *layout, uintptr_t index, CrowTile *out);

/**
 * Largest box side length guaranteed to appear uncut in at least one
 * tile, floor(alpha * beta). Returns 0 for invalid parameters.
 */
uint32_t crow_uncut_guarantee_bound(uint32_t alpha, double beta);

/**
 * Intersection over union of two boxes; 0 when disjoint, -1.0 when either
 * pointer is null.
 */
double crow_iou(const CrowBox *a, const CrowBox *b);

/**
 * Exact area of the union of `len` boxes, written to `out`.
 */
CrowStatus crow_union_area(const CrowBox *boxes, uintptr_t len, double *out);

/**
 * Greedy per-category NMS over `len` detections. `keep` must point to
 * `len` bytes; each is set to 1 when the detection survives, 0 when it is
 * suppressed.
 */
CrowStatus crow_nms(const CrowDetection *dets, uintptr_t len, double iou_threshold, uint8_t *keep);

/**
 * Run the full tiling pipeline: read the annotation file at `input_json`,
 * crop the images found under `images_dir` and write crops, the rewritten
 * annotation file and a run manifest into `out_dir`. `config` may be null
 * for defaults; `workers` is the thread count, 0 for one per CPU.
 *
 * Returns `CROW_STATUS_PARTIAL_FAILURE` when some images could not be
 * processed; outputs for the remaining images are still written.
 */
CrowStatus crow_run_tiling(const char *input_json,
                           const char *images_dir,
                           const char *out_dir,
                           const CrowTilingConfig *config,
                           uint32_t workers);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CROW_H */
