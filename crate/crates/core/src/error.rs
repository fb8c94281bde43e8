use std::path::PathBuf;

use thiserror::Error;

use crate::geometry::Validity;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("image dimensions must be positive, got {width}x{height}")]
    ZeroDimension { width: u32, height: u32 },
    #[error("cannot parse image dimensions {0:?}, expected WxH")]
    BadDims(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("coordinate {coordinate} = {value} outside [0, {extent}]")]
    OutOfRange { coordinate: &'static str, value: f64, extent: u32 },
    #[error("location bin {bin} exceeds the vocabulary maximum {max_bin}")]
    BinOutOfRange { bin: u64, max_bin: u32 },
    #[error("not a location token: {0:?}")]
    Unparseable(String),
    #[error("quad {quad} is inverted on {axis} ({lo} > {hi})")]
    Inverted { quad: usize, axis: &'static str, lo: u32, hi: u32 },
    #[error("sequence of {len} tokens is not a multiple of 4 ({trailing} trailing)")]
    PartialQuad { len: usize, trailing: usize },
    #[error("token {index}: {source}")]
    AtToken {
        index: usize,
        #[source]
        source: Box<CodecError>,
    },
    #[error("invalid quantizer: {0}")]
    BadConfig(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("iou_threshold must be in (0, 1], got {0}")]
    BadThreshold(f64),
    #[error("box {index} ({label:?}) has a NaN or infinite coordinate or score")]
    NonFinite { index: usize, label: String },
    #[error("box {index} ({label:?}) has score {score} outside [0, 1]")]
    BadScore { index: usize, label: String, score: f64 },
    #[error("box {index} has an empty label")]
    EmptyLabel { index: usize },
    #[error("box {index} ({label:?}) is inverted")]
    Inverted { index: usize, label: String },
    #[error("image {image_id}: {source}")]
    InImage {
        image_id: String,
        #[source]
        source: Box<FusionError>,
    },
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("abnormality {0:?} has an empty definition")]
    EmptyDefinition(String),
    #[error("abnormality name must be nonempty")]
    EmptyName,
    #[error("duplicate abnormality {0:?} (names are case-insensitive)")]
    DuplicateName(String),
    #[error("attribute set must be nonempty")]
    EmptyAttributes,
    #[error("duplicate attribute {0:?}")]
    DuplicateAttribute(String),
    #[error("knowledge mode needs a description for {0:?}")]
    MissingDescription(String),
    #[error("template {0:?} must contain {{name}}")]
    BadTemplate(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("unsupported file version {found} in {path} (expected {expected})")]
    Version { path: PathBuf, found: u32, expected: u32 },
    #[error("backend configuration: {0}")]
    Backend(String),
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown annotation format {0:?} (expected csv or coco_json)")]
    UnknownFormat(String),
    #[error("{path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("image {0} has no width/height in the image table")]
    MissingDims(String),
    #[error("knowledge mode: no description for label(s) {}", .0.join(", "))]
    MissingDescriptions(Vec<String>),
    #[error("split lists reference unknown image(s) {}", .0.join(", "))]
    UnknownImages(Vec<String>),
    #[error("image(s) {} appear in both train and test lists", .0.join(", "))]
    OverlappingSplit(Vec<String>),
    #[error("train fraction must be in [0, 1], got {0}")]
    BadRatio(f64),
    #[error("known class list is empty")]
    NoKnownClasses,
    #[error("sample {image_id}/{label}: {message}")]
    InvalidSample { image_id: String, label: String, message: String },
    #[error("box {validity} for image {image_id}")]
    InvalidBox { image_id: String, validity: Validity },
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("ground truth is empty, nothing to evaluate")]
    EmptyGroundTruth,
    #[error("detection {index} has confidence {value} outside [0, 1]")]
    BadConfidence { index: usize, value: f64 },
    #[error("{what} {index} has an invalid box")]
    InvalidBox { what: &'static str, index: usize },
    #[error("sigma must be positive and finite, got {0}")]
    BadSigma(f64),
    #[error("affinity floor must be in [0, 1), got {0}")]
    BadFloor(f64),
}
