//! Foreground/background pixel statistics.
//!
//! Foreground is the union area of the annotation boxes, so overlapping
//! objects never double-count pixels. The union is computed exactly with a
//! sweep over the x-edges and an interval-coverage count over compressed
//! y-coordinates.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{BoundingBox, DatasetIndex};
use crate::error::{Error, Result};

pub const HISTOGRAM_BINS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSparsity {
    pub image_id: u64,
    /// Union area of the image's boxes, clamped to the image bounds.
    pub foreground: f64,
    pub pixels: u64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityReport {
    pub per_image: Vec<ImageSparsity>,
    pub total_foreground: f64,
    pub total_pixels: u64,
    /// Dataset-level foreground ratio: sum of foreground over sum of pixels.
    pub ratio: f64,
    /// Histogram of per-image ratios over equal-width bins on [0, 1].
    pub histogram: Vec<u64>,
}

/// Exact area of the union of axis-aligned rectangles.
pub fn union_area(boxes: &[BoundingBox]) -> f64 {
    let boxes: Vec<&BoundingBox> = boxes.iter().filter(|b| b.w > 0.0 && b.h > 0.0).collect();
    if boxes.is_empty() {
        return 0.0;
    }

    let mut ys: Vec<f64> = boxes.iter().flat_map(|b| [b.y, b.bottom()]).collect();
    ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ys.dedup();

    // (x, is_opening, y0_idx, y1_idx)
    let mut events: Vec<(f64, bool, usize, usize)> = Vec::with_capacity(boxes.len() * 2);
    for b in &boxes {
        let y0 = ys.partition_point(|&v| v < b.y);
        let y1 = ys.partition_point(|&v| v < b.bottom());
        events.push((b.x, true, y0, y1));
        events.push((b.right(), false, y0, y1));
    }
    events.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(b.1.cmp(&a.1)));

    let mut coverage = vec![0u32; ys.len().saturating_sub(1)];
    let mut area = 0.0;
    let mut prev_x = events[0].0;
    for (x, opening, y0, y1) in events {
        if x > prev_x {
            let covered: f64 = coverage
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(i, _)| ys[i + 1] - ys[i])
                .sum();
            area += covered * (x - prev_x);
            prev_x = x;
        }
        for slot in &mut coverage[y0..y1] {
            if opening {
                *slot += 1;
            } else {
                *slot -= 1;
            }
        }
    }
    area
}

/// Per-image and dataset-level foreground/background ratios.
pub fn compute_sparsity(ds: &DatasetIndex) -> SparsityReport {
    let by_image = ds.annotations_by_image();
    let mut per_image: Vec<ImageSparsity> = ds
        .images
        .par_iter()
        .map(|img| {
            let boxes: Vec<BoundingBox> = by_image
                .get(&img.id)
                .map(|anns| {
                    anns.iter()
                        .filter_map(|a| {
                            a.bbox
                                .clamp_to(f64::from(img.width), f64::from(img.height))
                        })
                        .collect()
                })
                .unwrap_or_default();
            let pixels = u64::from(img.width) * u64::from(img.height);
            let foreground = union_area(&boxes);
            ImageSparsity {
                image_id: img.id,
                foreground,
                pixels,
                ratio: foreground / pixels as f64,
            }
        })
        .collect();
    per_image.sort_by_key(|s| s.image_id);

    let total_foreground: f64 = per_image.iter().map(|s| s.foreground).sum();
    let total_pixels: u64 = per_image.iter().map(|s| s.pixels).sum();
    let mut histogram = vec![0u64; HISTOGRAM_BINS];
    for s in &per_image {
        let bin = ((s.ratio * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
        histogram[bin] += 1;
    }
    SparsityReport {
        per_image,
        total_foreground,
        total_pixels,
        ratio: if total_pixels == 0 {
            0.0
        } else {
            total_foreground / total_pixels as f64
        },
        histogram,
    }
}

/// Histogram as gnuplot-compatible text: one `bin_center count` line per bin.
pub fn write_histogram_text(report: &SparsityReport, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for (i, count) in report.histogram.iter().enumerate() {
        let center = (i as f64 + 0.5) / HISTOGRAM_BINS as f64;
        out.push_str(&format!("{center} {count}\n"));
    }
    std::fs::write(path.as_ref(), out).map_err(|source| Error::Io {
        path: path.as_ref().to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{AnnotationRecord, CategoryRecord, ImageRecord};
    use proptest::prelude::*;

    fn b(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h)
    }

    /// Integer-grid rasterization oracle for union area.
    fn raster_union(boxes: &[BoundingBox], field: usize) -> f64 {
        let mut grid = vec![false; field * field];
        for bx in boxes {
            for y in bx.y as usize..(bx.bottom() as usize).min(field) {
                for x in bx.x as usize..(bx.right() as usize).min(field) {
                    grid[y * field + x] = true;
                }
            }
        }
        grid.iter().filter(|&&v| v).count() as f64
    }

    #[test]
    fn empty_union_is_zero() {
        assert_eq!(union_area(&[]), 0.0);
    }

    #[test]
    fn single_rectangle() {
        assert_eq!(union_area(&[b(0.0, 0.0, 10.0, 10.0)]), 100.0);
    }

    #[test]
    fn overlapping_pair_inclusion_exclusion() {
        let boxes = [b(0.0, 0.0, 10.0, 10.0), b(5.0, 5.0, 10.0, 10.0)];
        assert_eq!(union_area(&boxes), 175.0);
        assert_eq!(raster_union(&boxes, 64), 175.0);
    }

    #[test]
    fn subpixel_boxes() {
        assert_eq!(union_area(&[b(0.25, 0.25, 0.5, 0.5)]), 0.25);
    }

    fn ds_one_box() -> DatasetIndex {
        DatasetIndex {
            images: vec![ImageRecord {
                id: 1,
                file_name: "a.png".into(),
                width: 1024,
                height: 1024,
            }],
            annotations: vec![AnnotationRecord {
                id: 1,
                image_id: 1,
                bbox: b(0.0, 0.0, 32.0, 32.0),
                category_id: 1,
                area: 1024.0,
                iscrowd: false,
                cut: false,
            }],
            categories: vec![CategoryRecord {
                id: 1,
                name: "object".into(),
            }],
        }
    }

    #[test]
    fn sparse_fixture_ratio() {
        let report = compute_sparsity(&ds_one_box());
        assert_eq!(report.total_foreground, 1024.0);
        assert_eq!(report.total_pixels, 1024 * 1024);
        assert_eq!(report.ratio, 1024.0 / 1048576.0);
    }

    #[test]
    fn crow_output_fixture_ratio_increases() {
        // tile 512^2 + full frame 1024^2, each carrying the 32x32 box
        let ds = DatasetIndex {
            images: vec![
                ImageRecord {
                    id: 1,
                    file_name: "t.png".into(),
                    width: 512,
                    height: 512,
                },
                ImageRecord {
                    id: 2,
                    file_name: "f.png".into(),
                    width: 1024,
                    height: 1024,
                },
            ],
            annotations: vec![
                AnnotationRecord {
                    id: 1,
                    image_id: 1,
                    bbox: b(0.0, 0.0, 32.0, 32.0),
                    category_id: 1,
                    area: 1024.0,
                    iscrowd: false,
                    cut: false,
                },
                AnnotationRecord {
                    id: 2,
                    image_id: 2,
                    bbox: b(0.0, 0.0, 32.0, 32.0),
                    category_id: 1,
                    area: 1024.0,
                    iscrowd: false,
                    cut: false,
                },
            ],
            categories: vec![CategoryRecord {
                id: 1,
                name: "object".into(),
            }],
        };
        let report = compute_sparsity(&ds);
        assert_eq!(report.ratio, 2048.0 / 1310720.0);
        assert!(report.ratio > compute_sparsity(&ds_one_box()).ratio);
    }

    #[test]
    fn saturated_image_ratio_is_one() {
        let mut ds = ds_one_box();
        ds.annotations[0].bbox = b(0.0, 0.0, 1024.0, 1024.0);
        ds.annotations[0].area = 1024.0 * 1024.0;
        let report = compute_sparsity(&ds);
        assert_eq!(report.ratio, 1.0);
    }

    #[test]
    fn boxes_clamped_to_image_bounds() {
        let mut ds = ds_one_box();
        // bypass validation on purpose: overflowing boxes occur in the wild
        ds.annotations[0].bbox = b(1000.0, 1000.0, 100.0, 100.0);
        let report = compute_sparsity(&ds);
        assert_eq!(report.per_image[0].foreground, 24.0 * 24.0);
    }

    proptest! {
        #[test]
        fn union_matches_raster_oracle(
            boxes in proptest::collection::vec(
                (0u32..56, 0u32..56, 1u32..20, 1u32..20).prop_map(|(x, y, w, h)| {
                    b(f64::from(x), f64::from(y), f64::from(w.min(64 - x)), f64::from(h.min(64 - y)))
                }),
                0..20,
            )
        ) {
            prop_assert_eq!(union_area(&boxes), raster_union(&boxes, 64));
        }

        #[test]
        fn union_invariant_under_permutation_and_duplication(
            boxes in proptest::collection::vec(
                (0u32..50, 0u32..50, 1u32..14, 1u32..14).prop_map(|(x, y, w, h)| {
                    b(f64::from(x), f64::from(y), f64::from(w), f64::from(h))
                }),
                1..10,
            )
        ) {
            let base = union_area(&boxes);
            let mut reversed = boxes.clone();
            reversed.reverse();
            prop_assert_eq!(union_area(&reversed), base);
            let mut doubled = boxes.clone();
            doubled.extend_from_slice(&boxes);
            prop_assert_eq!(union_area(&doubled), base);
        }
    }
}
