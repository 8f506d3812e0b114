//! C ABI over the crow library.
//!
//! Conventions: every fallible call returns a [`CrowStatus`]; results are
//! written through out-pointers. On any non-OK status the calling thread
//! can fetch a human-readable message with [`crow_last_error_message`].
//! Handles returned by `*_compute` functions are opaque and must be
//! released with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use crow::layout::{compute_layout, uncut_guarantee_bound, CrowConfig, TileLayout};
use crow::merge::{iou, nms_indices, DetectionRecord};
use crow::pipeline::run_crow;
use crow::sparsity::union_area;
use crow::{BoundingBox, Error};

/// Result of a crow call. `CROW_STATUS_OK` is zero; everything else is an
/// error and leaves a message retrievable via `crow_last_error_message`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrowStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A parameter was outside its documented range.
    InvalidArgument = 2,
    /// An index was out of bounds for the addressed collection.
    OutOfRange = 3,
    /// Input data failed to parse or validate.
    InvalidData = 4,
    /// The underlying file operation failed.
    IoError = 5,
    /// The pipeline finished but some images failed; outputs cover the rest.
    PartialFailure = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<Vec<u8>>) {
    let text = CString::new(message).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(text));
}

fn clear_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

fn fail(status: CrowStatus, message: impl Into<Vec<u8>>) -> CrowStatus {
    set_error(message);
    status
}

fn fail_with(err: Error) -> CrowStatus {
    let status = match err {
        Error::Io { .. } => CrowStatus::IoError,
        Error::Argument(_) => CrowStatus::InvalidArgument,
        Error::PartialFailure { .. } => CrowStatus::PartialFailure,
        Error::UnknownTile { .. } => CrowStatus::OutOfRange,
        _ => CrowStatus::InvalidData,
    };
    fail(status, err.to_string())
}

/// Message describing the last error on this thread, or null when the last
/// call succeeded. The pointer stays valid until the next crow call on the
/// same thread; do not free it.
#[no_mangle]
pub extern "C" fn crow_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(ptr::null(), |text| text.as_ptr())
    })
}

/// Axis-aligned box, x/y is the top-left corner, in pixels.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrowBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl From<CrowBox> for BoundingBox {
    fn from(b: CrowBox) -> Self {
        BoundingBox::new(b.x, b.y, b.w, b.h)
    }
}

/// One crop window of a tile layout.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CrowTile {
    pub row: u32,
    pub col: u32,
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

/// A scored, categorised detection in image coordinates.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrowDetection {
    pub bbox: CrowBox,
    pub category_id: u64,
    pub score: f64,
}

/// Parameters of the tiling pipeline. Obtain defaults with
/// `crow_tiling_config_default` and override selectively.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrowTilingConfig {
    /// Tile side length in pixels.
    pub alpha: u32,
    /// Minimum relative overlap between adjacent tiles, in [0, 1).
    pub beta: f64,
    /// Full-frame down-scaling factor, in (0, 1].
    pub gamma: f64,
    /// Fraction of a box's area that must survive clipping, in [0, 1].
    pub min_visibility: f64,
    /// Non-zero to append a down-scaled full frame per image.
    pub include_full_frame: u8,
}

impl CrowTilingConfig {
    fn to_config(self) -> CrowConfig {
        CrowConfig {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            min_visibility: self.min_visibility,
            include_full_frame: self.include_full_frame != 0,
        }
    }
}

/// Fill `out` with the default pipeline parameters.
#[no_mangle]
pub extern "C" fn crow_tiling_config_default(out: *mut CrowTilingConfig) -> CrowStatus {
    clear_error();
    let Some(out) = (unsafe { out.as_mut() }) else {
        return fail(CrowStatus::NullArgument, "out pointer is null");
    };
    let cfg = CrowConfig::default();
    *out = CrowTilingConfig {
        alpha: cfg.alpha,
        beta: cfg.beta,
        gamma: cfg.gamma,
        min_visibility: cfg.min_visibility,
        include_full_frame: u8::from(cfg.include_full_frame),
    };
    CrowStatus::Ok
}

/// Opaque tile-layout handle; create with `crow_layout_compute`, release
/// with `crow_layout_free`.
pub struct CrowLayout(TileLayout);

/// Compute the corner-anchored overlapping layout for one image and store
/// a handle in `out`.
#[no_mangle]
pub extern "C" fn crow_layout_compute(
    image_width: u32,
    image_height: u32,
    alpha: u32,
    beta: f64,
    out: *mut *mut CrowLayout,
) -> CrowStatus {
    clear_error();
    if out.is_null() {
        return fail(CrowStatus::NullArgument, "out pointer is null");
    }
    let cfg = CrowConfig {
        alpha,
        beta,
        ..CrowConfig::default()
    };
    match compute_layout(image_width, image_height, &cfg) {
        Ok(layout) => {
            unsafe { *out = Box::into_raw(Box::new(CrowLayout(layout))) };
            CrowStatus::Ok
        }
        Err(err) => fail_with(err),
    }
}

/// Release a layout handle. Null is accepted and ignored.
#[no_mangle]
pub extern "C" fn crow_layout_free(layout: *mut CrowLayout) {
    if !layout.is_null() {
        drop(unsafe { Box::from_raw(layout) });
    }
}

/// Number of tiles in the layout; 0 for a null handle.
#[no_mangle]
pub extern "C" fn crow_layout_tile_count(layout: *const CrowLayout) -> usize {
    unsafe { layout.as_ref() }.map_or(0, |l| l.0.tiles.len())
}

/// Number of tile rows in the layout; 0 for a null handle.
#[no_mangle]
pub extern "C" fn crow_layout_rows(layout: *const CrowLayout) -> u32 {
    unsafe { layout.as_ref() }.map_or(0, |l| l.0.rows())
}

/// Number of tile columns in the layout; 0 for a null handle.
#[no_mangle]
pub extern "C" fn crow_layout_cols(layout: *const CrowLayout) -> u32 {
    unsafe { layout.as_ref() }.map_or(0, |l| l.0.cols())
}

/// Copy the tile at `index` (row-major order) into `out`.
#[no_mangle]
pub extern "C" fn crow_layout_tile(
    layout: *const CrowLayout,
    index: usize,
    out: *mut CrowTile,
) -> CrowStatus {
    clear_error();
    let Some(layout) = (unsafe { layout.as_ref() }) else {
        return fail(CrowStatus::NullArgument, "layout handle is null");
    };
    let Some(out) = (unsafe { out.as_mut() }) else {
        return fail(CrowStatus::NullArgument, "out pointer is null");
    };
    let Some(tile) = layout.0.tiles.get(index) else {
        return fail(
            CrowStatus::OutOfRange,
            format!(
                "tile index {index} out of range for {} tiles",
                layout.0.tiles.len()
            ),
        );
    };
    *out = CrowTile {
        row: tile.row,
        col: tile.col,
        x: tile.origin_x,
        y: tile.origin_y,
        w: tile.width,
        h: tile.height,
    };
    CrowStatus::Ok
}

/// Largest box side length guaranteed to appear uncut in at least one
/// tile, floor(alpha * beta). Returns 0 for invalid parameters.
#[no_mangle]
pub extern "C" fn crow_uncut_guarantee_bound(alpha: u32, beta: f64) -> u32 {
    let cfg = CrowConfig {
        alpha,
        beta,
        ..CrowConfig::default()
    };
    if cfg.validate().is_err() {
        return 0;
    }
    uncut_guarantee_bound(&cfg)
}

/// Intersection over union of two boxes; 0 when disjoint, -1.0 when either
/// pointer is null.
#[no_mangle]
pub extern "C" fn crow_iou(a: *const CrowBox, b: *const CrowBox) -> f64 {
    let (Some(a), Some(b)) = (unsafe { a.as_ref() }, unsafe { b.as_ref() }) else {
        return -1.0;
    };
    iou(&BoundingBox::from(*a), &BoundingBox::from(*b))
}

/// Exact area of the union of `len` boxes, written to `out`.
#[no_mangle]
pub extern "C" fn crow_union_area(
    boxes: *const CrowBox,
    len: usize,
    out: *mut f64,
) -> CrowStatus {
    clear_error();
    let Some(out) = (unsafe { out.as_mut() }) else {
        return fail(CrowStatus::NullArgument, "out pointer is null");
    };
    if boxes.is_null() && len > 0 {
        return fail(CrowStatus::NullArgument, "boxes pointer is null");
    }
    let boxes: &[CrowBox] = if len == 0 {
        &[]
    } else {
        unsafe { std::slice::from_raw_parts(boxes, len) }
    };
    let converted: Vec<BoundingBox> = boxes.iter().map(|&b| BoundingBox::from(b)).collect();
    if let Some(bad) = converted.iter().find(|b| !b.is_valid()) {
        return fail(
            CrowStatus::InvalidData,
            format!("invalid box [{}, {}, {}, {}]", bad.x, bad.y, bad.w, bad.h),
        );
    }
    *out = union_area(&converted);
    CrowStatus::Ok
}

/// Greedy per-category NMS over `len` detections. `keep` must point to
/// `len` bytes; each is set to 1 when the detection survives, 0 when it is
/// suppressed.
#[no_mangle]
pub extern "C" fn crow_nms(
    dets: *const CrowDetection,
    len: usize,
    iou_threshold: f64,
    keep: *mut u8,
) -> CrowStatus {
    clear_error();
    if (dets.is_null() || keep.is_null()) && len > 0 {
        return fail(CrowStatus::NullArgument, "detections or keep pointer is null");
    }
    if !(0.0..=1.0).contains(&iou_threshold) {
        return fail(
            CrowStatus::InvalidArgument,
            format!("IoU threshold {iou_threshold} outside [0, 1]"),
        );
    }
    if len == 0 {
        return CrowStatus::Ok;
    }
    let dets = unsafe { std::slice::from_raw_parts(dets, len) };
    let keep = unsafe { std::slice::from_raw_parts_mut(keep, len) };
    let records: Vec<DetectionRecord> = dets
        .iter()
        .map(|d| DetectionRecord {
            image_id: 0,
            bbox: d.bbox.into(),
            category_id: d.category_id,
            score: d.score,
        })
        .collect();
    if let Some(bad) = records.iter().find(|r| r.validate().is_err()) {
        return fail_with(bad.validate().unwrap_err());
    }
    keep.fill(0);
    for idx in nms_indices(&records, iou_threshold) {
        keep[idx] = 1;
    }
    CrowStatus::Ok
}

fn utf8_path<'a>(ptr: *const c_char, name: &str) -> Result<&'a Path, CrowStatus> {
    if ptr.is_null() {
        return Err(fail(CrowStatus::NullArgument, format!("{name} is null")));
    }
    match unsafe { CStr::from_ptr(ptr) }.to_str() {
        Ok(text) => Ok(Path::new(text)),
        Err(_) => Err(fail(
            CrowStatus::InvalidArgument,
            format!("{name} is not valid UTF-8"),
        )),
    }
}

/// Run the full tiling pipeline: read the annotation file at `input_json`,
/// crop the images found under `images_dir` and write crops, the rewritten
/// annotation file and a run manifest into `out_dir`. `config` may be null
/// for defaults; `workers` is the thread count, 0 for one per CPU.
///
/// Returns `CROW_STATUS_PARTIAL_FAILURE` when some images could not be
/// processed; outputs for the remaining images are still written.
#[no_mangle]
pub extern "C" fn crow_run_tiling(
    input_json: *const c_char,
    images_dir: *const c_char,
    out_dir: *const c_char,
    config: *const CrowTilingConfig,
    workers: u32,
) -> CrowStatus {
    clear_error();
    let (input, images, out) = match (
        utf8_path(input_json, "input_json"),
        utf8_path(images_dir, "images_dir"),
        utf8_path(out_dir, "out_dir"),
    ) {
        (Ok(a), Ok(b), Ok(c)) => (a, b, c),
        (Err(s), _, _) | (_, Err(s), _) | (_, _, Err(s)) => return s,
    };
    let cfg = unsafe { config.as_ref() }.map_or_else(CrowConfig::default, |c| c.to_config());
    match run_crow(input, images, &cfg, out, workers as usize) {
        Ok(_) => CrowStatus::Ok,
        Err(err) => fail_with(err),
    }
}
