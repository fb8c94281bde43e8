//! Data preparation and evaluation for detection-as-sequence grounding
//! models: location tokens, box fusion, knowledge prompts, dataset builds,
//! mAP and RoDeO scoring, and report rendering.

pub mod box_fusion;
pub mod dataset_ingest;
pub mod error;
pub mod geometry;
pub mod knowledge_prompts;
pub mod metrics_map;
pub mod metrics_rodeo;
pub mod report;
pub mod token_codec;

pub use box_fusion::{FusionConfig, ScoreMode, ScoredBox};
pub use dataset_ingest::{AnnotationRecord, GroundingSample, Partition, Split};
pub use error::{CodecError, FusionError, GeometryError, IngestError, MetricsError, PromptError};
pub use geometry::{generalized_iou, iou, ImageDims, PixelBox};
pub use knowledge_prompts::{AbnormalityDef, AttributeSet, DescriptionTable, PromptMode, Registry};
pub use metrics_map::{APResult, Detection, GroundTruth, Interpolation};
pub use metrics_rodeo::{RodeoConfig, RodeoScores};
pub use report::EvalRun;
pub use token_codec::{DecodePolicy, LocToken, Quantizer, Rounding, TokenQuad};
