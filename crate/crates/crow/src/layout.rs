//! Corner-anchored overlapping tile pattern.
//!
//! Per axis of length `L` with tile side `alpha` and minimum relative
//! overlap `beta`: when `L <= alpha` a single full-extent tile is used,
//! otherwise the smallest tile count `n` with stride `<= alpha * (1 - beta)`
//! is chosen, `n = ceil((L - alpha) / (alpha * (1 - beta))) + 1`, and the
//! tiles are spread evenly so the first and last tile touch the image
//! corners exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the cropping-window transformation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrowConfig {
    /// Tile side length in pixels.
    pub alpha: u32,
    /// Minimum relative overlap between adjacent tiles, in `[0, 1)`.
    pub beta: f64,
    /// Full-frame down-scaling factor, in `(0, 1]`.
    pub gamma: f64,
    /// Fraction of a box's original area that must survive tile clipping
    /// for the box to be kept.
    pub min_visibility: f64,
    /// Append a down-scaled full frame per source image.
    pub include_full_frame: bool,
}

impl Default for CrowConfig {
    fn default() -> Self {
        Self {
            alpha: 512,
            beta: 0.25,
            gamma: 1.0,
            min_visibility: 0.1,
            include_full_frame: true,
        }
    }
}

impl CrowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 1 {
            return Err(Error::Argument("tile size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::Argument(format!(
                "overlap must be in [0, 1), got {}",
                self.beta
            )));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Argument(format!(
                "downscale factor must be in (0, 1], got {}",
                self.gamma
            )));
        }
        if !(0.0..=1.0).contains(&self.min_visibility) {
            return Err(Error::Argument(format!(
                "min visibility must be in [0, 1], got {}",
                self.min_visibility
            )));
        }
        Ok(())
    }
}

/// One crop window, fully inside its image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileSpec {
    pub row: u32,
    pub col: u32,
    pub origin_x: u32,
    pub origin_y: u32,
    pub width: u32,
    pub height: u32,
}

impl TileSpec {
    pub fn right(&self) -> u32 {
        self.origin_x + self.width
    }

    pub fn bottom(&self) -> u32 {
        self.origin_y + self.height
    }
}

/// The deterministic crop pattern for one image, tiles in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileLayout {
    pub image_width: u32,
    pub image_height: u32,
    pub tiles: Vec<TileSpec>,
    /// Real-valued stride before rounding; 0 when a single tile covers the axis.
    pub stride_x: f64,
    pub stride_y: f64,
}

impl TileLayout {
    pub fn rows(&self) -> u32 {
        self.tiles.last().map_or(0, |t| t.row + 1)
    }

    pub fn cols(&self) -> u32 {
        self.tiles.last().map_or(0, |t| t.col + 1)
    }

    pub fn tile(&self, row: u32, col: u32) -> Option<&TileSpec> {
        let cols = self.cols() as usize;
        self.tiles
            .get(row as usize * cols + col as usize)
            .filter(|t| t.row == row && t.col == col)
    }
}

/// Tile origins along one axis plus the pre-rounding stride.
fn axis_positions(len: u32, alpha: u32, beta: f64) -> (Vec<u32>, f64) {
    if len <= alpha {
        return (vec![0], 0.0);
    }
    let span = f64::from(len - alpha);
    let max_stride = f64::from(alpha) * (1.0 - beta);
    let n = (span / max_stride).ceil() as u32 + 1;
    let stride = span / f64::from(n - 1);
    let positions = (0..n)
        .map(|k| (f64::from(k) * stride + 0.5).floor() as u32)
        .collect();
    (positions, stride)
}

/// Compute the corner-anchored overlapping layout for an image.
pub fn compute_layout(image_width: u32, image_height: u32, cfg: &CrowConfig) -> Result<TileLayout> {
    cfg.validate()?;
    if image_width == 0 || image_height == 0 {
        return Err(Error::Argument(format!(
            "image dimensions must be positive, got {image_width}x{image_height}"
        )));
    }
    let (xs, stride_x) = axis_positions(image_width, cfg.alpha, cfg.beta);
    let (ys, stride_y) = axis_positions(image_height, cfg.alpha, cfg.beta);
    let tile_w = cfg.alpha.min(image_width);
    let tile_h = cfg.alpha.min(image_height);
    let mut tiles = Vec::with_capacity(xs.len() * ys.len());
    for (row, &y) in ys.iter().enumerate() {
        for (col, &x) in xs.iter().enumerate() {
            tiles.push(TileSpec {
                row: row as u32,
                col: col as u32,
                origin_x: x,
                origin_y: y,
                width: tile_w,
                height: tile_h,
            });
        }
    }
    Ok(TileLayout {
        image_width,
        image_height,
        tiles,
        stride_x,
        stride_y,
    })
}

/// Largest box side length (in whole pixels) for which the layout provably
/// contains the box uncut in at least one tile. With stride
/// `<= alpha * (1 - beta)`, any interval of length `<= alpha * beta` fits
/// fully inside some tile window.
pub fn uncut_guarantee_bound(cfg: &CrowConfig) -> u32 {
    (f64::from(cfg.alpha) * cfg.beta).floor() as u32
}
