//! In-memory model and strict file I/O for COCO-style detection datasets.
//!
//! The on-disk schema follows the COCO layout: a top-level object with
//! `images`, `annotations` and `categories` arrays, boxes stored as
//! `[x, y, w, h]` with a top-left origin. Unknown fields are ignored on
//! load and not re-emitted. Saving is deterministic: identical datasets
//! produce byte-identical files.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Axis-aligned box in pixel coordinates, x/y is the top-left corner.
/// Coordinates are real-valued; sub-pixel precision is preserved through
/// every transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn is_valid(&self) -> bool {
        self.w > 0.0 && self.h > 0.0 && self.x >= 0.0 && self.y >= 0.0
    }

    /// Intersection of two boxes, or `None` when the overlap area is zero.
    pub fn intersection(&self, other: &BoundingBox) -> Option<BoundingBox> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        if x1 > x0 && y1 > y0 {
            Some(BoundingBox::new(x0, y0, x1 - x0, y1 - y0))
        } else {
            None
        }
    }

    /// Clamp the box into `[0, width] x [0, height]`.
    pub fn clamp_to(&self, width: f64, height: f64) -> Option<BoundingBox> {
        self.intersection(&BoundingBox::new(0.0, 0.0, width, height))
    }
}

impl Serialize for BoundingBox {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        [self.x, self.y, self.w, self.h].serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BoundingBox {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let [x, y, w, h] = <[f64; 4]>::deserialize(deserializer)?;
        Ok(BoundingBox { x, y, w, h })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub id: u64,
    pub image_id: u64,
    pub bbox: BoundingBox,
    pub category_id: u64,
    pub area: f64,
    #[serde(with = "int_bool", default)]
    pub iscrowd: bool,
    /// Set when the box was clipped by a tile boundary. Only emitted when true.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub cut: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRecord {
    pub id: u64,
    pub name: String,
}

/// A whole detection dataset: images, their annotations and the category
/// table. Immutable after construction and safe to share across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DatasetIndex {
    pub images: Vec<ImageRecord>,
    pub annotations: Vec<AnnotationRecord>,
    pub categories: Vec<CategoryRecord>,
}

/// `iscrowd` is stored as 0/1 in COCO files.
mod int_bool {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(serde::de::Error::custom(format!(
                "iscrowd must be 0 or 1, got {other}"
            ))),
        }
    }
}

impl DatasetIndex {
    /// Build a dataset from parts, normalizing the ordering and checking
    /// every invariant.
    pub fn new(
        images: Vec<ImageRecord>,
        annotations: Vec<AnnotationRecord>,
        categories: Vec<CategoryRecord>,
    ) -> Result<Self> {
        let mut ds = Self {
            images,
            annotations,
            categories,
        };
        ds.normalize();
        ds.validate()?;
        Ok(ds)
    }

    /// Sort images, annotations and categories by id ascending.
    pub fn normalize(&mut self) {
        self.images.sort_by_key(|i| i.id);
        self.annotations.sort_by_key(|a| a.id);
        self.categories.sort_by_key(|c| c.id);
    }

    pub fn image(&self, id: u64) -> Option<&ImageRecord> {
        self.images
            .binary_search_by_key(&id, |i| i.id)
            .ok()
            .map(|idx| &self.images[idx])
    }

    /// Annotations grouped by owning image id.
    pub fn annotations_by_image(&self) -> HashMap<u64, Vec<&AnnotationRecord>> {
        let mut map: HashMap<u64, Vec<&AnnotationRecord>> = HashMap::new();
        for ann in &self.annotations {
            map.entry(ann.image_id).or_default().push(ann);
        }
        map
    }

    /// Check every type invariant: unique ascending ids, referential
    /// integrity, positive box dimensions, boxes inside image bounds.
    pub fn validate(&self) -> Result<()> {
        for pair in self.images.windows(2) {
            if pair[0].id >= pair[1].id {
                return Err(Error::Validation(format!(
                    "image ids not strictly ascending near id {}",
                    pair[1].id
                )));
            }
        }
        for img in &self.images {
            if img.width == 0 || img.height == 0 {
                return Err(Error::Validation(format!(
                    "image {} has zero-area dimensions {}x{}",
                    img.id, img.width, img.height
                )));
            }
        }

        let mut category_ids = HashSet::new();
        for cat in &self.categories {
            if !category_ids.insert(cat.id) {
                return Err(Error::Validation(format!("duplicate category id {}", cat.id)));
            }
            if cat.name.is_empty() {
                return Err(Error::Validation(format!("category {} has an empty name", cat.id)));
            }
        }

        let image_by_id: HashMap<u64, &ImageRecord> =
            self.images.iter().map(|i| (i.id, i)).collect();
        for pair in self.annotations.windows(2) {
            if pair[0].id >= pair[1].id {
                return Err(Error::Validation(format!(
                    "annotation ids not strictly ascending near id {}",
                    pair[1].id
                )));
            }
        }
        for ann in &self.annotations {
            let img = image_by_id.get(&ann.image_id).ok_or(Error::DanglingReference {
                annotation_id: ann.id,
                field: "image_id",
                value: ann.image_id,
            })?;
            if !category_ids.contains(&ann.category_id) {
                return Err(Error::DanglingReference {
                    annotation_id: ann.id,
                    field: "category_id",
                    value: ann.category_id,
                });
            }
            if !ann.bbox.is_valid() {
                return Err(Error::Validation(format!(
                    "annotation {}: non-positive box dimensions [{}, {}, {}, {}]",
                    ann.id, ann.bbox.x, ann.bbox.y, ann.bbox.w, ann.bbox.h
                )));
            }
            if ann.area <= 0.0 {
                return Err(Error::Validation(format!(
                    "annotation {}: non-positive area {}",
                    ann.id, ann.area
                )));
            }
            if ann.bbox.right() > f64::from(img.width) || ann.bbox.bottom() > f64::from(img.height)
            {
                return Err(Error::Validation(format!(
                    "annotation {}: box exceeds image {} bounds ({}x{})",
                    ann.id, img.id, img.width, img.height
                )));
            }
        }
        Ok(())
    }
}

/// Load and validate a dataset file.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<DatasetIndex> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut ds: DatasetIndex = serde_json::from_str(&text).map_err(|e| {
        let (line, column) = (e.line(), e.column());
        Error::Parse {
            path: path.to_path_buf(),
            offset: byte_offset(&text, line, column),
            line,
            column,
            message: e.to_string(),
        }
    })?;
    ds.normalize();
    ds.validate()?;
    Ok(ds)
}

/// Save a dataset. The output is a pure function of the dataset content:
/// saving the same dataset twice yields byte-identical files.
pub fn save_dataset(ds: &DatasetIndex, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    ds.validate()?;
    let mut bytes = serde_json::to_vec(ds).expect("dataset serialization cannot fail");
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Translate serde_json's 1-based line/column into a byte offset.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let mut offset = 0;
    for (idx, l) in text.split('\n').enumerate() {
        if idx + 1 == line {
            return offset + column.saturating_sub(1);
        }
        offset += l.len() + 1;
    }
    text.len()
}
