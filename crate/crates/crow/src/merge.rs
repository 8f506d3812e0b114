//! Tiled-inference merge baseline: map per-tile detections into full-frame
//! coordinates and suppress duplicates with greedy per-category NMS. This
//! is the comparison path; the preferred inference mode runs on the full
//! frame and needs no merging.

use serde::{Deserialize, Serialize};

use crate::dataset::BoundingBox;
use crate::error::{Error, Result};
use crate::layout::TileLayout;

/// A predicted box with class and confidence, in image coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub image_id: u64,
    pub bbox: BoundingBox,
    pub category_id: u64,
    pub score: f64,
}

impl DetectionRecord {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::Validation(format!(
                "detection score {} outside [0, 1]",
                self.score
            )));
        }
        if !self.bbox.is_valid() {
            return Err(Error::Validation(format!(
                "invalid detection box [{}, {}, {}, {}]",
                self.bbox.x, self.bbox.y, self.bbox.w, self.bbox.h
            )));
        }
        Ok(())
    }
}

/// On-disk detection entry; `tile` names the source tile by (row, col),
/// absent for detections already in full-frame coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiledDetection {
    pub image_id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tile: Option<(u32, u32)>,
    pub bbox: BoundingBox,
    pub category_id: u64,
    pub score: f64,
}

/// Intersection over union of two boxes; 0 when disjoint.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    match a.intersection(b) {
        Some(inter) => {
            let i = inter.area();
            i / (a.area() + b.area() - i)
        }
        None => 0.0,
    }
}

/// Translate per-tile detections by their tile origin and clamp the result
/// to the image bounds.
pub fn remap_to_frame(
    dets: &[TiledDetection],
    layout: &TileLayout,
) -> Result<Vec<DetectionRecord>> {
    dets.iter()
        .map(|d| {
            let bbox = match d.tile {
                Some((row, col)) => {
                    let tile = layout
                        .tile(row, col)
                        .ok_or(Error::UnknownTile { row, col })?;
                    BoundingBox::new(
                        d.bbox.x + f64::from(tile.origin_x),
                        d.bbox.y + f64::from(tile.origin_y),
                        d.bbox.w,
                        d.bbox.h,
                    )
                }
                None => d.bbox,
            };
            let bounds = BoundingBox::new(
                0.0,
                0.0,
                f64::from(layout.image_width),
                f64::from(layout.image_height),
            );
            let bbox = bbox.intersection(&bounds).ok_or_else(|| {
                Error::Validation(format!(
                    "detection box lies outside the {}x{} image",
                    layout.image_width, layout.image_height
                ))
            })?;
            Ok(DetectionRecord {
                image_id: d.image_id,
                bbox,
                category_id: d.category_id,
                score: d.score,
            })
        })
        .collect()
}

/// Greedy hard NMS, per category: visit detections by descending score
/// (ties: lower original index first) and keep one iff its IoU with every
/// already-kept detection of the same category is below the threshold.
/// Output is in kept order.
pub fn nms(dets: &[DetectionRecord], iou_threshold: f64) -> Vec<DetectionRecord> {
    nms_indices(dets, iou_threshold)
        .into_iter()
        .map(|i| dets[i].clone())
        .collect()
}

/// Like [`nms`], but returns the original indices of the kept detections,
/// in kept order.
pub fn nms_indices(dets: &[DetectionRecord], iou_threshold: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .partial_cmp(&dets[a].score)
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = Vec::new();
    for idx in order {
        let candidate = &dets[idx];
        let suppressed = kept.iter().any(|&k| {
            dets[k].category_id == candidate.category_id
                && iou(&dets[k].bbox, &candidate.bbox) >= iou_threshold
        });
        if !suppressed {
            kept.push(idx);
        }
    }
    kept
}
