//! Cropping-window (CroW) preprocessing for sparse object-detection datasets.
//!
//! The core transformation splits every training image into overlapping
//! tiles anchored at the image corners, discards tiles that contain no
//! annotations and appends a down-scaled copy of the full frame. The
//! result is a new, deterministic representation of the training set with
//! a much better foreground-to-background pixel ratio.
//!
//! Supporting modules cover the surrounding tooling: strict COCO-style
//! dataset I/O ([`dataset`]), foreground/background sparsity statistics
//! ([`sparsity`]), a tiled-inference NMS merge baseline ([`merge`]),
//! COCO-protocol mAP evaluation ([`eval`]) and a conv-net training-memory
//! estimator ([`memest`]).

pub mod dataset;
pub mod error;
pub mod eval;
pub mod layout;
pub mod memest;
pub mod merge;
pub mod pipeline;
pub mod sparsity;

pub use dataset::{
    AnnotationRecord, BoundingBox, CategoryRecord, DatasetIndex, ImageRecord,
};
pub use error::Error;
pub use layout::{CrowConfig, TileLayout, TileSpec};
pub use merge::DetectionRecord;
