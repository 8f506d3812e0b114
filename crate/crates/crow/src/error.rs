use std::path::PathBuf;

use thiserror::Error;

/// Error type shared by all modules of this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed JSON, located by byte offset into the file.
    #[error("malformed JSON in {path} at byte {offset} (line {line}, column {column}): {message}")]
    Parse {
        path: PathBuf,
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },

    /// An annotation references an image or category id that does not exist.
    #[error("annotation {annotation_id}: dangling {field} {value}")]
    DanglingReference {
        annotation_id: u64,
        field: &'static str,
        value: u64,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    /// A detection references a tile index that is not part of the layout.
    #[error("detection references unknown tile (row {row}, col {col})")]
    UnknownTile { row: u32, col: u32 },

    /// Dimensional mismatch in a layer chain, naming the offending layer.
    #[error("layer {index}: {message}")]
    Layer { index: usize, message: String },

    #[error("failed to decode image {path}: {message}")]
    ImageDecode { path: PathBuf, message: String },

    /// Some images failed during a batch run; per-image details are in the manifest.
    #[error("{failed} of {total} images failed during processing")]
    PartialFailure { failed: usize, total: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
