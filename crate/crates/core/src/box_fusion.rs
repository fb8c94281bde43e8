//! Weighted box fusion for consolidating overlapping annotations.
//!
//! Boxes of one label are visited in descending score order. Each joins the
//! first cluster whose running fused box overlaps it by at least the IoU
//! threshold, otherwise it seeds a new cluster. A cluster's fused box is the
//! score-weighted mean of its members' corners.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::FusionError;
use crate::geometry::{iou, ImageDims, PixelBox};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.55;

/// A labeled box with a confidence weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredBox {
    #[serde(rename = "box")]
    pub bbox: PixelBox,
    pub label: String,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl ScoredBox {
    pub fn new(bbox: PixelBox, label: impl Into<String>, score: f64) -> Self {
        Self { bbox, label: label.into(), score, source: None }
    }

    /// An annotator's box. Annotations carry no confidence, so the weight is 1.
    pub fn annotation(bbox: PixelBox, label: impl Into<String>, annotator: Option<String>) -> Self {
        Self { bbox, label: label.into(), score: 1.0, source: annotator }
    }

    fn output_cmp(&self, other: &ScoredBox) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then_with(|| self.label.cmp(&other.label))
            .then_with(|| self.bbox.lex_cmp(&other.bbox))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    #[default]
    Mean,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionConfig {
    pub iou_threshold: f64,
    pub score_mode: ScoreMode,
    pub skip_degenerate: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { iou_threshold: DEFAULT_IOU_THRESHOLD, score_mode: ScoreMode::Mean, skip_degenerate: true }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(FusionError::BadThreshold(self.iou_threshold));
        }
        Ok(())
    }
}

/// Non-fatal events during fusion.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FusionDiagnostic {
    DroppedDegenerate { index: usize, label: String },
}

impl fmt::Display for FusionDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FusionDiagnostic::DroppedDegenerate { index, label } => {
                write!(f, "dropped zero-area box {index} ({label})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FusionOutput {
    pub boxes: Vec<ScoredBox>,
    pub diagnostics: Vec<FusionDiagnostic>,
}

struct Cluster {
    members: Vec<usize>,
    fused: PixelBox,
}

fn weighted_box(members: &[usize], boxes: &[(usize, &ScoredBox)]) -> PixelBox {
    let total: f64 = members.iter().map(|&i| boxes[i].1.score).sum();
    let mut acc = [0.0; 4];
    let mut lo = [f64::INFINITY; 4];
    let mut hi = [f64::NEG_INFINITY; 4];
    for &i in members {
        let b = boxes[i].1;
        // All-zero weights fall back to an unweighted mean.
        let w = if total > 0.0 { b.score } else { 1.0 };
        for (k, c) in b.bbox.coords().into_iter().enumerate() {
            acc[k] += w * c;
            lo[k] = lo[k].min(c);
            hi[k] = hi[k].max(c);
        }
    }
    let denom = if total > 0.0 { total } else { members.len() as f64 };
    // Clamp so rounding never pushes a corner outside its members' range.
    let mut out = [0.0; 4];
    for k in 0..4 {
        out[k] = (acc[k] / denom).clamp(lo[k], hi[k]);
    }
    PixelBox::from_coords(out)
}

fn fuse_label(label: &str, mut boxes: Vec<(usize, &ScoredBox)>, cfg: &FusionConfig) -> Vec<(ScoredBox, Vec<usize>)> {
    boxes.sort_by(|(_, a), (_, b)| b.score.total_cmp(&a.score).then_with(|| a.bbox.lex_cmp(&b.bbox)));
    let mut clusters: Vec<Cluster> = Vec::new();
    for i in 0..boxes.len() {
        let candidate = &boxes[i].1.bbox;
        match clusters.iter_mut().find(|c| iou(&c.fused, candidate) >= cfg.iou_threshold) {
            Some(c) => {
                c.members.push(i);
                c.fused = weighted_box(&c.members, &boxes);
            }
            None => clusters.push(Cluster { members: vec![i], fused: *candidate }),
        }
    }
    clusters
        .into_iter()
        .map(|c| {
            let scores = c.members.iter().map(|&i| boxes[i].1.score);
            let score = match cfg.score_mode {
                ScoreMode::Mean => scores.sum::<f64>() / c.members.len() as f64,
                ScoreMode::Max => scores.fold(0.0, f64::max),
            };
            let mut members: Vec<usize> = c.members.iter().map(|&i| boxes[i].0).collect();
            members.sort_unstable();
            (ScoredBox::new(c.fused, label, score), members)
        })
        .collect()
}

/// Fuses overlapping same-label boxes. Labels never mix.
pub fn fuse(boxes: &[ScoredBox], cfg: &FusionConfig) -> Result<FusionOutput, FusionError> {
    fuse_with_members(boxes, cfg).map(|(out, _)| out)
}

/// Like [`fuse`], also returning for each output box the input indices of
/// its cluster members.
pub fn fuse_with_members(
    boxes: &[ScoredBox],
    cfg: &FusionConfig,
) -> Result<(FusionOutput, Vec<Vec<usize>>), FusionError> {
    cfg.validate()?;
    let mut diagnostics = Vec::new();
    let mut by_label: BTreeMap<&str, Vec<(usize, &ScoredBox)>> = BTreeMap::new();
    for (index, b) in boxes.iter().enumerate() {
        if !b.bbox.is_finite() || !b.score.is_finite() {
            return Err(FusionError::NonFinite { index, label: b.label.clone() });
        }
        if !(0.0..=1.0).contains(&b.score) {
            return Err(FusionError::BadScore { index, label: b.label.clone(), score: b.score });
        }
        if b.label.trim().is_empty() {
            return Err(FusionError::EmptyLabel { index });
        }
        if !b.bbox.is_ordered() {
            return Err(FusionError::Inverted { index, label: b.label.clone() });
        }
        if cfg.skip_degenerate && b.bbox.is_degenerate() {
            diagnostics.push(FusionDiagnostic::DroppedDegenerate { index, label: b.label.clone() });
            continue;
        }
        by_label.entry(b.label.as_str()).or_default().push((index, b));
    }
    let mut fused: Vec<(ScoredBox, Vec<usize>)> =
        by_label.into_iter().flat_map(|(label, group)| fuse_label(label, group, cfg)).collect();
    fused.sort_by(|a, b| a.0.output_cmp(&b.0));
    let (boxes, members) = fused.into_iter().unzip();
    Ok((FusionOutput { boxes, diagnostics }, members))
}

/// All annotations of one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageAnnotations {
    pub image_id: String,
    pub dims: ImageDims,
    pub boxes: Vec<ScoredBox>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedImage {
    pub image_id: String,
    pub dims: ImageDims,
    pub boxes: Vec<ScoredBox>,
    pub diagnostics: Vec<FusionDiagnostic>,
}

/// Runs [`fuse`] on every image; images are processed in parallel on the
/// current rayon pool and returned sorted by image id.
pub fn fuse_annotations(images: &[ImageAnnotations], cfg: &FusionConfig) -> Result<Vec<FusedImage>, FusionError> {
    cfg.validate()?;
    let mut fused = images
        .par_iter()
        .map(|img| {
            let out = fuse(&img.boxes, cfg)
                .map_err(|e| FusionError::InImage { image_id: img.image_id.clone(), source: Box::new(e) })?;
            Ok(FusedImage {
                image_id: img.image_id.clone(),
                dims: img.dims,
                boxes: out.boxes,
                diagnostics: out.diagnostics,
            })
        })
        .collect::<Result<Vec<_>, FusionError>>()?;
    fused.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    Ok(fused)
}
