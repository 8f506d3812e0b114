//! End-to-end cropping-window transformation: crop image rasters per
//! layout, clip and remap annotations, discard empty tiles, append the
//! down-scaled full frame and emit the new training set with a manifest.
//!
//! Per-image work runs on a worker pool; results are gathered and ordered
//! by (source image id, tile row, tile col) with full frames last before
//! id assignment, so the output is byte-identical for any worker count.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use image::imageops::FilterType;
use image::DynamicImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    load_dataset, save_dataset, AnnotationRecord, BoundingBox, DatasetIndex, ImageRecord,
};
use crate::error::{Error, Result};
use crate::layout::{compute_layout, CrowConfig, TileSpec};

/// One emitted tile: the crop window plus its remapped annotations.
/// Annotations carry tile-relative coordinates and keep their source ids
/// until final id assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct TileSample {
    pub source_image_id: u64,
    pub tile: TileSpec,
    pub out_file_name: String,
    pub annotations: Vec<AnnotationRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageManifestEntry {
    pub image_id: u64,
    pub tiles_emitted: u32,
    pub tiles_discarded: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Run summary written alongside the output dataset. Wall-clock timing is
/// logged instead of stored so re-runs diff cleanly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineManifest {
    pub config: CrowConfig,
    pub per_image: Vec<ImageManifestEntry>,
    pub total_images_emitted: u64,
    pub total_tiles_emitted: u64,
    pub total_tiles_discarded: u64,
    pub total_full_frames: u64,
    pub total_annotations: u64,
    pub cut_annotations: u64,
    pub failed_images: u64,
}

/// Intersect a box with a tile window and translate it to tile
/// coordinates. Returns the clipped box and the surviving area fraction,
/// or `None` when the intersection is empty.
pub fn clip_box(bbox: &BoundingBox, tile: &TileSpec) -> Option<(BoundingBox, f64)> {
    let window = BoundingBox::new(
        f64::from(tile.origin_x),
        f64::from(tile.origin_y),
        f64::from(tile.width),
        f64::from(tile.height),
    );
    let inter = bbox.intersection(&window)?;
    let visibility = inter.area() / bbox.area();
    Some((
        BoundingBox::new(
            inter.x - window.x,
            inter.y - window.y,
            inter.w,
            inter.h,
        ),
        visibility,
    ))
}

fn tile_file_name(image_id: u64, tile: &TileSpec) -> String {
    format!("{image_id}_r{}_c{}.png", tile.row, tile.col)
}

fn full_frame_file_name(image_id: u64) -> String {
    format!("{image_id}_full.png")
}

/// Plan the tile samples of one image: clip every annotation against every
/// layout tile, keep boxes meeting the visibility threshold and emit a
/// tile iff at least one box survives. Geometry only; raster cropping
/// happens separately.
pub fn plan_tiles(
    image: &ImageRecord,
    annotations: &[&AnnotationRecord],
    cfg: &CrowConfig,
) -> Result<(Vec<TileSample>, u32)> {
    let layout = compute_layout(image.width, image.height, cfg)?;
    let mut samples = Vec::new();
    let mut discarded = 0u32;
    for tile in &layout.tiles {
        let mut kept = Vec::new();
        for ann in annotations {
            if let Some((bbox, visibility)) = clip_box(&ann.bbox, tile) {
                if visibility >= cfg.min_visibility {
                    kept.push(AnnotationRecord {
                        id: ann.id,
                        image_id: image.id,
                        bbox,
                        category_id: ann.category_id,
                        area: bbox.area(),
                        iscrowd: ann.iscrowd,
                        cut: ann.cut || visibility < 1.0,
                    });
                }
            }
        }
        if kept.is_empty() {
            discarded += 1;
        } else {
            samples.push(TileSample {
                source_image_id: image.id,
                tile: *tile,
                out_file_name: tile_file_name(image.id, tile),
                annotations: kept,
            });
        }
    }
    Ok((samples, discarded))
}

/// Crop the raster for each planned tile.
pub fn divide_image(
    image: &ImageRecord,
    raster: &DynamicImage,
    annotations: &[&AnnotationRecord],
    cfg: &CrowConfig,
) -> Result<(Vec<(TileSample, DynamicImage)>, u32)> {
    if raster.width() != image.width || raster.height() != image.height {
        return Err(Error::Validation(format!(
            "raster of image {} is {}x{}, expected {}x{}",
            image.id,
            raster.width(),
            raster.height(),
            image.width,
            image.height
        )));
    }
    let (samples, discarded) = plan_tiles(image, annotations, cfg)?;
    let out = samples
        .into_iter()
        .map(|s| {
            let crop = raster.crop_imm(
                s.tile.origin_x,
                s.tile.origin_y,
                s.tile.width,
                s.tile.height,
            );
            (s, crop)
        })
        .collect();
    Ok((out, discarded))
}

/// Scale annotations by `gamma`; box sides that fall below one pixel are
/// clamped to 1 px and flagged.
pub fn downscale_annotations(
    annotations: &[&AnnotationRecord],
    gamma: f64,
    out_width: u32,
    out_height: u32,
) -> Vec<AnnotationRecord> {
    annotations
        .iter()
        .map(|ann| {
            let mut b = BoundingBox::new(
                ann.bbox.x * gamma,
                ann.bbox.y * gamma,
                ann.bbox.w * gamma,
                ann.bbox.h * gamma,
            );
            let mut clamped = false;
            if b.w < 1.0 {
                b.w = 1.0;
                clamped = true;
            }
            if b.h < 1.0 {
                b.h = 1.0;
                clamped = true;
            }
            // raster dims round to nearest, so a scaled box can poke out by
            // up to half a pixel; pull it back inside
            let (w, h) = (f64::from(out_width), f64::from(out_height));
            b.x = b.x.min(w - b.w).max(0.0);
            b.y = b.y.min(h - b.h).max(0.0);
            if b.right() > w {
                b.w = w - b.x;
            }
            if b.bottom() > h {
                b.h = h - b.y;
            }
            AnnotationRecord {
                id: ann.id,
                image_id: ann.image_id,
                bbox: b,
                category_id: ann.category_id,
                area: b.area(),
                iscrowd: ann.iscrowd,
                cut: ann.cut || clamped,
            }
        })
        .collect()
}

/// Output dimensions of the full-frame pass.
pub fn downscaled_dims(width: u32, height: u32, gamma: f64) -> (u32, u32) {
    (
        ((f64::from(width) * gamma) + 0.5).floor().max(1.0) as u32,
        ((f64::from(height) * gamma) + 0.5).floor().max(1.0) as u32,
    )
}

/// Resize the full frame with bilinear interpolation and scale its
/// annotations. A no-op on the raster when `gamma` is 1.
pub fn downscale_image(
    image: &ImageRecord,
    raster: &DynamicImage,
    annotations: &[&AnnotationRecord],
    gamma: f64,
) -> (DynamicImage, u32, u32, Vec<AnnotationRecord>) {
    let (out_w, out_h) = downscaled_dims(image.width, image.height, gamma);
    let resized = if gamma == 1.0 {
        raster.clone()
    } else {
        raster.resize_exact(out_w, out_h, FilterType::Triangle)
    };
    let anns = downscale_annotations(annotations, gamma, out_w, out_h);
    (resized, out_w, out_h, anns)
}

struct ImageOutput {
    source_image_id: u64,
    tiles: Vec<TileSample>,
    tiles_discarded: u32,
    full_frame: Option<(String, u32, u32, Vec<AnnotationRecord>)>,
    error: Option<String>,
}

/// Run the full transformation over a dataset on disk.
///
/// Writes `<out>/images/*.png`, `<out>/annotations.json` and
/// `<out>/manifest.json`. Returns the new dataset and manifest; a
/// [`Error::PartialFailure`] is returned when some images failed, after
/// all outputs (including the manifest recording the failures) have been
/// written.
pub fn run_crow(
    input: &Path,
    images_dir: &Path,
    cfg: &CrowConfig,
    out_dir: &Path,
    workers: usize,
) -> Result<(DatasetIndex, PipelineManifest)> {
    cfg.validate()?;
    let started = Instant::now();
    let ds = load_dataset(input)?;
    let images_out = out_dir.join("images");
    fs::create_dir_all(&images_out).map_err(|source| Error::Io {
        path: images_out.clone(),
        source,
    })?;

    let by_image = ds.annotations_by_image();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Argument(format!("failed to build worker pool: {e}")))?;

    let mut outputs: Vec<ImageOutput> = pool.install(|| {
        ds.images
            .par_iter()
            .map(|img| process_image(img, &by_image, cfg, images_dir, &images_out))
            .collect()
    });
    outputs.sort_by_key(|o| o.source_image_id);

    let (new_ds, manifest) = assemble(&ds, cfg, &outputs);
    save_dataset(&new_ds, &out_dir.join("annotations.json"))?;
    write_manifest(&manifest, &out_dir.join("manifest.json"))?;
    log::info!(
        "processed {} images in {:.1} ms",
        ds.images.len(),
        started.elapsed().as_secs_f64() * 1e3
    );

    if manifest.failed_images > 0 {
        return Err(Error::PartialFailure {
            failed: manifest.failed_images as usize,
            total: ds.images.len(),
        });
    }
    Ok((new_ds, manifest))
}

fn process_image(
    img: &ImageRecord,
    by_image: &std::collections::HashMap<u64, Vec<&AnnotationRecord>>,
    cfg: &CrowConfig,
    images_dir: &Path,
    images_out: &Path,
) -> ImageOutput {
    let anns = by_image.get(&img.id).map_or(&[][..], Vec::as_slice);
    let mut output = ImageOutput {
        source_image_id: img.id,
        tiles: Vec::new(),
        tiles_discarded: 0,
        full_frame: None,
        error: None,
    };
    let raster_path = images_dir.join(&img.file_name);
    let raster = match image::open(&raster_path) {
        Ok(r) => r,
        Err(e) => {
            output.error = Some(format!("{}: {e}", raster_path.display()));
            return output;
        }
    };
    match divide_image(img, &raster, anns, cfg) {
        Ok((tiles, discarded)) => {
            output.tiles_discarded = discarded;
            for (sample, crop) in tiles {
                if let Err(e) = crop.save(images_out.join(&sample.out_file_name)) {
                    output.error = Some(format!("{}: {e}", sample.out_file_name));
                    return output;
                }
                output.tiles.push(sample);
            }
        }
        Err(e) => {
            output.error = Some(e.to_string());
            return output;
        }
    }
    if cfg.include_full_frame {
        let (resized, out_w, out_h, anns) = downscale_image(img, &raster, anns, cfg.gamma);
        let name = full_frame_file_name(img.id);
        if let Err(e) = resized.save(images_out.join(&name)) {
            output.error = Some(format!("{name}: {e}"));
            return output;
        }
        output.full_frame = Some((name, out_w, out_h, anns));
    }
    output
}

/// Reassign ids densely: tiles of all images first, ordered by
/// (source id, row, col), then full frames ordered by source id.
fn assemble(
    source: &DatasetIndex,
    cfg: &CrowConfig,
    outputs: &[ImageOutput],
) -> (DatasetIndex, PipelineManifest) {
    let mut images = Vec::new();
    let mut annotations = Vec::new();
    let mut next_image_id = 1u64;
    let mut next_ann_id = 1u64;
    let mut cut_count = 0u64;

    let mut push_image =
        |images: &mut Vec<ImageRecord>,
         annotations: &mut Vec<AnnotationRecord>,
         cut_count: &mut u64,
         file_name: String,
         width: u32,
         height: u32,
         anns: &[AnnotationRecord]| {
            let image_id = next_image_id;
            next_image_id += 1;
            images.push(ImageRecord {
                id: image_id,
                file_name,
                width,
                height,
            });
            for ann in anns {
                let mut ann = ann.clone();
                ann.id = next_ann_id;
                next_ann_id += 1;
                ann.image_id = image_id;
                if ann.cut {
                    *cut_count += 1;
                }
                annotations.push(ann);
            }
        };

    for out in outputs {
        for sample in &out.tiles {
            push_image(
                &mut images,
                &mut annotations,
                &mut cut_count,
                sample.out_file_name.clone(),
                sample.tile.width,
                sample.tile.height,
                &sample.annotations,
            );
        }
    }
    for out in outputs {
        if let Some((name, w, h, anns)) = &out.full_frame {
            push_image(
                &mut images,
                &mut annotations,
                &mut cut_count,
                name.clone(),
                *w,
                *h,
                anns,
            );
        }
    }

    let total_tiles: u64 = outputs.iter().map(|o| o.tiles.len() as u64).sum();
    let total_full: u64 = outputs.iter().filter(|o| o.full_frame.is_some()).count() as u64;
    let manifest = PipelineManifest {
        config: *cfg,
        per_image: outputs
            .iter()
            .map(|o| ImageManifestEntry {
                image_id: o.source_image_id,
                tiles_emitted: o.tiles.len() as u32,
                tiles_discarded: o.tiles_discarded,
                error: o.error.clone(),
            })
            .collect(),
        total_images_emitted: images.len() as u64,
        total_tiles_emitted: total_tiles,
        total_tiles_discarded: outputs.iter().map(|o| u64::from(o.tiles_discarded)).sum(),
        total_full_frames: total_full,
        total_annotations: annotations.len() as u64,
        cut_annotations: cut_count,
        failed_images: outputs.iter().filter(|o| o.error.is_some()).count() as u64,
    };
    let ds = DatasetIndex {
        images,
        annotations,
        categories: source.categories.clone(),
    };
    (ds, manifest)
}

fn write_manifest(manifest: &PipelineManifest, path: &PathBuf) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(manifest).expect("manifest serialization cannot fail");
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::CategoryRecord;

    fn image(id: u64, w: u32, h: u32) -> ImageRecord {
        ImageRecord {
            id,
            file_name: format!("{id}.png"),
            width: w,
            height: h,
        }
    }

    fn ann(id: u64, image_id: u64, x: f64, y: f64, w: f64, h: f64) -> AnnotationRecord {
        AnnotationRecord {
            id,
            image_id,
            bbox: BoundingBox::new(x, y, w, h),
            category_id: 1,
            area: w * h,
            iscrowd: false,
            cut: false,
        }
    }

    fn tile(x: u32, y: u32, w: u32, h: u32) -> TileSpec {
        TileSpec {
            row: 0,
            col: 0,
            origin_x: x,
            origin_y: y,
            width: w,
            height: h,
        }
    }

    #[test]
    fn clip_full_containment() {
        let b = BoundingBox::new(100.0, 100.0, 64.0, 64.0);
        let (clipped, vis) = clip_box(&b, &tile(0, 0, 512, 512)).unwrap();
        assert_eq!(clipped, b);
        assert_eq!(vis, 1.0);
    }

    #[test]
    fn clip_partial() {
        let b = BoundingBox::new(480.0, 480.0, 64.0, 64.0);
        let (clipped, vis) = clip_box(&b, &tile(0, 0, 512, 512)).unwrap();
        assert_eq!(clipped, BoundingBox::new(480.0, 480.0, 32.0, 32.0));
        assert_eq!(vis, 0.25);
    }

    #[test]
    fn clip_disjoint() {
        let b = BoundingBox::new(600.0, 600.0, 10.0, 10.0);
        assert!(clip_box(&b, &tile(0, 0, 512, 512)).is_none());
    }

    #[test]
    fn clip_translates_to_tile_coordinates() {
        let b = BoundingBox::new(300.0, 300.0, 20.0, 20.0);
        let (clipped, vis) = clip_box(&b, &tile(256, 256, 512, 512)).unwrap();
        assert_eq!(clipped, BoundingBox::new(44.0, 44.0, 20.0, 20.0));
        assert_eq!(vis, 1.0);
    }

    #[test]
    fn single_box_keeps_one_of_nine_tiles() {
        let img = image(1, 1024, 1024);
        let a = ann(1, 1, 0.0, 0.0, 32.0, 32.0);
        let (samples, discarded) =
            plan_tiles(&img, &[&a], &CrowConfig::default()).unwrap();
        assert_eq!(samples.len(), 1);
        assert_eq!(discarded, 8);
        let s = &samples[0];
        assert_eq!((s.tile.row, s.tile.col), (0, 0));
        assert_eq!(s.out_file_name, "1_r0_c0.png");
        assert_eq!(s.annotations.len(), 1);
        assert!(!s.annotations[0].cut);
    }

    #[test]
    fn no_annotations_yields_no_tiles() {
        let img = image(1, 1024, 1024);
        let (samples, discarded) = plan_tiles(&img, &[], &CrowConfig::default()).unwrap();
        assert!(samples.is_empty());
        assert_eq!(discarded, 9);
    }

    /// Tile windows per axis are [0,512], [256,768], [512,1024]. A box is
    /// uncut in every tile whose window contains it fully; clipped copies
    /// may still appear in adjacent tiles.
    #[test]
    fn centered_box_appears_uncut_in_four_tiles() {
        let img = image(1, 1024, 1024);
        // [260, 324]^2 fits in the windows starting at 0 and 256 per axis
        let a = ann(1, 1, 260.0, 260.0, 64.0, 64.0);
        let (samples, _) = plan_tiles(&img, &[&a], &CrowConfig::default()).unwrap();
        let uncut: Vec<_> = samples
            .iter()
            .filter(|s| s.annotations.iter().any(|x| !x.cut))
            .collect();
        assert_eq!(uncut.len(), 4);
        for s in &uncut {
            assert!(s.tile.row <= 1 && s.tile.col <= 1);
            assert_eq!(s.annotations[0].bbox.area(), 64.0 * 64.0);
        }

        // [240, 304]^2 starts before 256, so only the origin window holds it whole
        let a = ann(1, 1, 240.0, 240.0, 64.0, 64.0);
        let (samples, _) = plan_tiles(&img, &[&a], &CrowConfig::default()).unwrap();
        let uncut: Vec<_> = samples
            .iter()
            .filter(|s| s.annotations.iter().any(|x| !x.cut))
            .collect();
        assert_eq!(uncut.len(), 1);
        assert_eq!((uncut[0].tile.row, uncut[0].tile.col), (0, 0));
    }

    #[test]
    fn min_visibility_drops_slivers_and_sets_cut_flag() {
        let img = image(1, 1024, 1024);
        // box [500, 564] x [0, 64]: in tile col 0 (window [0,512]) visibility
        // is 12/64, in tile col 1 (window [256,768]) it is 1.0
        let a = ann(1, 1, 500.0, 0.0, 64.0, 64.0);
        let cfg = CrowConfig {
            min_visibility: 0.5,
            ..CrowConfig::default()
        };
        let (samples, _) = plan_tiles(&img, &[&a], &cfg).unwrap();
        assert!(samples
            .iter()
            .all(|s| !(s.tile.col == 0 && s.annotations.iter().any(|x| x.id == 1))));
        let full = samples.iter().find(|s| s.tile.col == 1).unwrap();
        assert!(!full.annotations[0].cut);

        let keep_all = CrowConfig {
            min_visibility: 0.0,
            ..CrowConfig::default()
        };
        let (samples, _) = plan_tiles(&img, &[&a], &keep_all).unwrap();
        let sliver = samples.iter().find(|s| s.tile.col == 0).unwrap();
        assert!(sliver.annotations[0].cut);
        assert_eq!(sliver.annotations[0].bbox, BoundingBox::new(500.0, 0.0, 12.0, 64.0));
    }

    #[test]
    fn tile_annotations_map_back_into_source_box() {
        let img = image(1, 1024, 1024);
        let a = ann(1, 1, 100.5, 200.25, 300.0, 150.0);
        let (samples, _) = plan_tiles(
            &img,
            &[&a],
            &CrowConfig {
                min_visibility: 0.0,
                ..CrowConfig::default()
            },
        )
        .unwrap();
        assert!(!samples.is_empty());
        for s in &samples {
            for t in &s.annotations {
                let gx = t.bbox.x + f64::from(s.tile.origin_x);
                let gy = t.bbox.y + f64::from(s.tile.origin_y);
                assert!(gx >= a.bbox.x - 1e-9 && gy >= a.bbox.y - 1e-9);
                assert!(gx + t.bbox.w <= a.bbox.right() + 1e-9);
                assert!(gy + t.bbox.h <= a.bbox.bottom() + 1e-9);
                if !t.cut {
                    assert_eq!((gx, gy, t.bbox.w, t.bbox.h), (a.bbox.x, a.bbox.y, a.bbox.w, a.bbox.h));
                }
            }
        }
    }

    #[test]
    fn downscale_identity() {
        let a = ann(1, 1, 100.0, 100.0, 64.0, 64.0);
        let out = downscale_annotations(&[&a], 1.0, 1024, 1024);
        assert_eq!(out[0].bbox, a.bbox);
        assert_eq!(downscaled_dims(1024, 1024, 1.0), (1024, 1024));
    }

    #[test]
    fn downscale_halves_boxes() {
        let a = ann(1, 1, 100.0, 100.0, 64.0, 64.0);
        let out = downscale_annotations(&[&a], 0.5, 512, 512);
        assert_eq!(out[0].bbox, BoundingBox::new(50.0, 50.0, 32.0, 32.0));
        assert_eq!(out[0].area, 32.0 * 32.0);
    }

    #[test]
    fn downscale_to_max_side_1024() {
        // SeaDronesSee-sized frame: gamma chosen so the max side becomes 1024
        let gamma = 1024.0 / 5456.0;
        assert_eq!(downscaled_dims(5456, 3632, gamma), (1024, 682));
    }

    #[test]
    fn downscale_clamps_subpixel_boxes() {
        let a = ann(1, 1, 10.0, 10.0, 3.0, 3.0);
        let out = downscale_annotations(&[&a], 0.1, 102, 102);
        assert_eq!(out[0].bbox.w, 1.0);
        assert_eq!(out[0].bbox.h, 1.0);
        assert!(out[0].cut);
    }

    fn write_fixture(dir: &Path) -> (PathBuf, PathBuf) {
        let ds = DatasetIndex {
            images: vec![image(1, 1024, 1024)],
            annotations: vec![ann(1, 1, 0.0, 0.0, 32.0, 32.0)],
            categories: vec![CategoryRecord {
                id: 1,
                name: "object".into(),
            }],
        };
        let ann_path = dir.join("ann.json");
        save_dataset(&ds, &ann_path).unwrap();
        let images_dir = dir.join("src_images");
        fs::create_dir_all(&images_dir).unwrap();
        let raster = image::RgbImage::from_fn(1024, 1024, |x, y| {
            image::Rgb([(x % 256) as u8, (y % 256) as u8, 7])
        });
        raster.save(images_dir.join("1.png")).unwrap();
        (ann_path, images_dir)
    }

    #[test]
    fn run_crow_single_object_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let (ann_path, images_dir) = write_fixture(dir.path());
        let out_dir = dir.path().join("out");
        let (ds, manifest) =
            run_crow(&ann_path, &images_dir, &CrowConfig::default(), &out_dir, 2).unwrap();
        assert_eq!(ds.images.len(), 2); // 1 tile + 1 full frame
        assert_eq!(ds.annotations.len(), 2);
        assert_eq!(manifest.total_tiles_emitted, 1);
        assert_eq!(manifest.total_tiles_discarded, 8);
        assert_eq!(manifest.total_full_frames, 1);
        assert_eq!(ds.images[0].file_name, "1_r0_c0.png");
        assert_eq!(ds.images[1].file_name, "1_full.png");
        assert!(out_dir.join("images/1_r0_c0.png").exists());
        assert!(out_dir.join("images/1_full.png").exists());
        assert!(out_dir.join("annotations.json").exists());
        assert!(out_dir.join("manifest.json").exists());
        // gamma = 1: the full-frame raster is a pixel-exact copy
        let src = image::open(images_dir.join("1.png")).unwrap().to_rgb8();
        let full = image::open(out_dir.join("images/1_full.png")).unwrap().to_rgb8();
        assert_eq!(src.as_raw(), full.as_raw());
        // tile raster is the exact top-left crop
        let tile_img = image::open(out_dir.join("images/1_r0_c0.png")).unwrap().to_rgb8();
        assert_eq!(tile_img.dimensions(), (512, 512));
        assert_eq!(tile_img.get_pixel(10, 20), src.get_pixel(10, 20));
    }

    #[test]
    fn run_crow_without_full_frame() {
        let dir = tempfile::tempdir().unwrap();
        let (ann_path, images_dir) = write_fixture(dir.path());
        let cfg = CrowConfig {
            include_full_frame: false,
            ..CrowConfig::default()
        };
        let (ds, manifest) =
            run_crow(&ann_path, &images_dir, &cfg, &dir.path().join("out"), 1).unwrap();
        assert_eq!(ds.images.len(), 1);
        assert_eq!(ds.annotations.len(), 1);
        assert_eq!(manifest.total_full_frames, 0);
    }

    #[test]
    fn run_crow_empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let ann_path = dir.path().join("ann.json");
        save_dataset(&DatasetIndex::default(), &ann_path).unwrap();
        let (ds, manifest) = run_crow(
            &ann_path,
            dir.path(),
            &CrowConfig::default(),
            &dir.path().join("out"),
            1,
        )
        .unwrap();
        assert!(ds.images.is_empty());
        assert!(ds.annotations.is_empty());
        assert_eq!(manifest.total_images_emitted, 0);
    }

    #[test]
    fn run_crow_reports_decode_failure_and_continues() {
        let dir = tempfile::tempdir().unwrap();
        let ds = DatasetIndex {
            images: vec![image(1, 64, 64), image(2, 64, 64)],
            annotations: vec![ann(1, 1, 0.0, 0.0, 8.0, 8.0), ann(2, 2, 0.0, 0.0, 8.0, 8.0)],
            categories: vec![CategoryRecord {
                id: 1,
                name: "object".into(),
            }],
        };
        let ann_path = dir.path().join("ann.json");
        save_dataset(&ds, &ann_path).unwrap();
        let images_dir = dir.path().join("imgs");
        fs::create_dir_all(&images_dir).unwrap();
        fs::write(images_dir.join("1.png"), b"not a png").unwrap();
        image::RgbImage::new(64, 64).save(images_dir.join("2.png")).unwrap();
        let err = run_crow(
            &ann_path,
            &images_dir,
            &CrowConfig::default(),
            &dir.path().join("out"),
            1,
        )
        .unwrap_err();
        assert!(matches!(err, Error::PartialFailure { failed: 1, total: 2 }));
        // the surviving image was still processed and the manifest records the failure
        let manifest: PipelineManifest = serde_json::from_str(
            &fs::read_to_string(dir.path().join("out/manifest.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(manifest.failed_images, 1);
        assert!(manifest.per_image[0].error.is_some());
        assert_eq!(manifest.per_image[1].tiles_emitted, 1);
    }
}
