use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed VOC annotation: {message}")]
    Voc { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    /// A detections-file record failed to parse or validate. `record` is the
    /// zero-based index of the record (non-blank line) in the file.
    #[error("{path}: detection record {record}: {message}")]
    Detection {
        path: PathBuf,
        record: usize,
        message: String,
    },

    #[error("invalid bounding box ({x_min}, {y_min}, {x_max}, {y_max})")]
    InvalidBox {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
    },

    #[error("crop rectangle {x},{y} {width}x{height} does not fit a {raster_width}x{raster_height} raster")]
    CropOutOfBounds {
        x: u32,
        y: u32,
        width: u32,
        height: u32,
        raster_width: u32,
        raster_height: u32,
    },

    #[error("affine map is singular")]
    SingularMap,

    #[error("expected a {expected}-channel raster, got {actual} channels")]
    ChannelMismatch { expected: u8, actual: u8 },

    #[error("invalid raster: {0}")]
    InvalidRaster(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn voc(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Voc {
            path: path.into(),
            message: message.into(),
        }
    }
}
