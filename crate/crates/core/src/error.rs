//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by the scan-processing pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {path}")]
    MissingFile { path: String },

    #[error("malformed record at row {row} in {path}: {reason}")]
    MalformedRecord {
        path: String,
        row: usize,
        reason: String,
    },

    #[error("non-finite coordinate at record {row}")]
    NonFiniteCoordinate { row: usize },

    #[error("point out of bounds: range {range_m} m, height {height_m} m (limits {max_range_m} m, [0, {height_span_m}] m)")]
    PointOutOfBounds {
        range_m: f64,
        height_m: f64,
        max_range_m: f64,
        height_span_m: f64,
    },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("crop {crop_h}x{crop_w} exceeds spectrum {rows}x{cols}")]
    CropTooLarge {
        crop_h: usize,
        crop_w: usize,
        rows: usize,
        cols: usize,
    },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("duplicate place id {0}")]
    DuplicateId(u64),

    #[error("query against an empty database")]
    EmptyDatabase,

    #[error("degenerate correlation: peak sharpness {sharpness} below threshold {threshold}")]
    DegenerateDistribution { sharpness: f64, threshold: f64 },

    #[error("probability at target bin {bin} is numerically zero")]
    ZeroProbabilityAtTarget { bin: usize },

    #[error("augmentation count {n} exceeds sector count {sectors}")]
    NTooLarge { n: usize, sectors: usize },

    #[error("non-finite loss at epoch {epoch}, step {step} (quad {quad}, rot {rot})")]
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        quad: f64,
        rot: f64,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
