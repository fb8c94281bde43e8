//! Average precision at IoU thresholds 0.50, 0.55, …, 0.95 and the mAP50,
//! mAP75 and mAP50:95 aggregates.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::MetricsError;
use crate::geometry::{iou, PixelBox};

/// A predicted box with a confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: String,
    pub label: String,
    #[serde(rename = "box")]
    pub bbox: PixelBox,
    pub confidence: f64,
}

/// A ground-truth box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub image_id: String,
    pub label: String,
    #[serde(rename = "box")]
    pub bbox: PixelBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Interpolation {
    /// Exact area under the precision envelope.
    #[serde(rename = "cont")]
    Continuous,
    /// Mean envelope precision at recall 0.00, 0.01, …, 1.00.
    #[default]
    #[serde(rename = "101pt")]
    Points101,
}

impl FromStr for Interpolation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cont" => Ok(Interpolation::Continuous),
            "101pt" => Ok(Interpolation::Points101),
            other => Err(format!("unknown interpolation {other:?} (cont|101pt)")),
        }
    }
}

impl fmt::Display for Interpolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Interpolation::Continuous => "cont",
            Interpolation::Points101 => "101pt",
        })
    }
}

/// `[0.50, 0.55, …, 0.95]`, each computed as an exact ratio of integers.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|k| f64::from(50 + 5 * k) / 100.0).collect()
}

/// Ranking order: confidence descending, then box lexicographic.
pub fn detection_order(a: &Detection, b: &Detection) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then_with(|| a.bbox.lex_cmp(&b.bbox))
        .then_with(|| a.image_id.cmp(&b.image_id))
}

/// Sorts in ranking order.
pub fn sort_detections(dets: &mut [Detection]) {
    dets.sort_by(detection_order);
}

/// Marks each detection as a true positive (`true`) or false positive.
///
/// `dets` must already be in ranking order. Each detection takes the
/// highest-IoU unmatched ground truth with IoU ≥ `iou_thr`; ties go to the
/// lower index.
pub fn match_greedy(dets: &[PixelBox], gts: &[PixelBox], iou_thr: f64) -> Vec<bool> {
    let ious: Vec<Vec<f64>> = dets.iter().map(|d| gts.iter().map(|g| iou(d, g)).collect()).collect();
    match_with_ious(&ious, gts.len(), iou_thr)
}

fn match_with_ious(ious: &[Vec<f64>], num_gt: usize, thr: f64) -> Vec<bool> {
    let mut taken = vec![false; num_gt];
    ious.iter()
        .map(|row| {
            let mut best: Option<(usize, f64)> = None;
            for (j, &v) in row.iter().enumerate() {
                if taken[j] || v < thr {
                    continue;
                }
                if best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((j, v));
                }
            }
            match best {
                Some((j, _)) => {
                    taken[j] = true;
                    true
                }
                None => false,
            }
        })
        .collect()
}

/// AP from TP/FP flags in ranking order.
///
/// `None` when there is neither ground truth nor any detection, meaning the
/// class takes no part in averaging.
pub fn average_precision(flags: &[bool], num_gt: usize, interpolation: Interpolation) -> Option<f64> {
    if num_gt == 0 {
        return if flags.is_empty() { None } else { Some(0.0) };
    }
    let mut precision = Vec::with_capacity(flags.len());
    let mut recall = Vec::with_capacity(flags.len());
    let mut tp = 0usize;
    for (i, &f) in flags.iter().enumerate() {
        tp += usize::from(f);
        precision.push(tp as f64 / (i + 1) as f64);
        recall.push(tp as f64 / num_gt as f64);
    }
    // Precision envelope: running max from the right.
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let ap = match interpolation {
        Interpolation::Points101 => {
            let mut sum = 0.0;
            let mut i = 0;
            for k in 0..=100u32 {
                let r = f64::from(k) / 100.0;
                while i < recall.len() && recall[i] < r {
                    i += 1;
                }
                if i < recall.len() {
                    sum += precision[i];
                }
            }
            sum / 101.0
        }
        Interpolation::Continuous => {
            let mut area = 0.0;
            let mut prev = 0.0;
            for (r, p) in recall.iter().zip(&precision) {
                if *r > prev {
                    area += (r - prev) * p;
                    prev = *r;
                }
            }
            area
        }
    };
    Some(ap.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct APResult {
    pub interpolation: Interpolation,
    pub thresholds: Vec<f64>,
    /// Class → AP at each threshold, for every class present in ground truth.
    pub per_class: BTreeMap<String, Vec<f64>>,
    /// Unweighted class mean at each threshold.
    pub map_per_threshold: Vec<f64>,
    pub map50: f64,
    pub map75: f64,
    pub map50_95: f64,
}

impl APResult {
    /// The AP of one class at 0.50.
    pub fn class_ap50(&self, class: &str) -> Option<f64> {
        self.per_class.get(class).map(|v| v[0])
    }
}

fn validate_inputs(dets: &[Detection], gts: &[GroundTruth]) -> Result<(), MetricsError> {
    for (index, d) in dets.iter().enumerate() {
        if !(0.0..=1.0).contains(&d.confidence) {
            return Err(MetricsError::BadConfidence { index, value: d.confidence });
        }
        if !d.bbox.is_finite() || !d.bbox.is_ordered() {
            return Err(MetricsError::InvalidBox { what: "detection", index });
        }
    }
    for (index, g) in gts.iter().enumerate() {
        if !g.bbox.is_finite() || !g.bbox.is_ordered() {
            return Err(MetricsError::InvalidBox { what: "ground truth", index });
        }
    }
    Ok(())
}

struct ClassImage<'a> {
    dets: Vec<&'a Detection>,
    ious: Vec<Vec<f64>>,
    num_gt: usize,
}

/// Per-class AP at every COCO threshold plus the mAP aggregates.
///
/// Classes are those present in `gts`; detections of other classes are
/// ignored.
pub fn map_suite(
    dets: &[Detection],
    gts: &[GroundTruth],
    interpolation: Interpolation,
) -> Result<APResult, MetricsError> {
    if gts.is_empty() {
        return Err(MetricsError::EmptyGroundTruth);
    }
    validate_inputs(dets, gts)?;
    let thresholds = coco_thresholds();
    let classes: BTreeSet<&str> = gts.iter().map(|g| g.label.as_str()).collect();

    let per_class: Vec<(String, Vec<f64>)> = classes
        .par_iter()
        .map(|&class| {
            let mut images: BTreeMap<&str, (Vec<&Detection>, Vec<&PixelBox>)> = BTreeMap::new();
            for g in gts.iter().filter(|g| g.label == class) {
                images.entry(g.image_id.as_str()).or_default().1.push(&g.bbox);
            }
            for d in dets.iter().filter(|d| d.label == class) {
                images.entry(d.image_id.as_str()).or_default().0.push(d);
            }
            let num_gt: usize = images.values().map(|(_, g)| g.len()).sum();
            let prepared: Vec<ClassImage> = images
                .into_values()
                .map(|(mut ds, gs)| {
                    ds.sort_by(|a, b| detection_order(a, b));
                    let ious = ds.iter().map(|d| gs.iter().map(|g| iou(&d.bbox, g)).collect()).collect();
                    ClassImage { dets: ds, ious, num_gt: gs.len() }
                })
                .collect();
            let aps = thresholds
                .iter()
                .map(|&thr| {
                    let mut ranked: Vec<(&Detection, bool)> = prepared
                        .iter()
                        .flat_map(|ci| {
                            let flags = match_with_ious(&ci.ious, ci.num_gt, thr);
                            ci.dets.iter().copied().zip(flags)
                        })
                        .collect();
                    ranked.sort_by(|a, b| detection_order(a.0, b.0));
                    let flags: Vec<bool> = ranked.into_iter().map(|(_, f)| f).collect();
                    average_precision(&flags, num_gt, interpolation).unwrap_or(0.0)
                })
                .collect();
            (class.to_string(), aps)
        })
        .collect();

    let n = per_class.len() as f64;
    let map_per_threshold: Vec<f64> =
        (0..thresholds.len()).map(|t| per_class.iter().map(|(_, aps)| aps[t]).sum::<f64>() / n).collect();
    let map50_95 = map_per_threshold.iter().sum::<f64>() / map_per_threshold.len() as f64;
    Ok(APResult {
        interpolation,
        map50: map_per_threshold[0],
        map75: map_per_threshold[5],
        map50_95,
        map_per_threshold,
        thresholds,
        per_class: per_class.into_iter().collect(),
    })
}
