//! RoDeO-style scoring: localization, shape and classification sub-scores
//! over a one-to-one matching of predictions to ground truth.
//!
//! Per image, predictions and ground truths are matched by minimum-cost
//! assignment on a square matrix padded with dummy nodes. The pair cost is
//! `1 - GIoU`; a pair whose GIoU does not exceed the affinity floor is
//! never kept.
//!
//! Over matched pairs:
//! * localization affinity is `exp(-d / sigma)`, `d` = center distance
//!   divided by the ground-truth diagonal;
//! * shape affinity is the IoU after moving the prediction's center onto the
//!   ground truth's center;
//! * classification affinity is 1 for a correct label, else 0.
//!
//! Each sub-score is the mean pair affinity scaled by the matching rate
//! `2·pairs / (preds + gts)`, so the classification sub-score is the F1 of
//! label correctness. The total is the harmonic mean of the three.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::MetricsError;
use crate::geometry::{generalized_iou, PixelBox};
use crate::metrics_map::{Detection, GroundTruth};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Pool pairs and counts over the dataset, score once.
    #[default]
    Micro,
    /// Score each image, then average.
    Macro,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RodeoConfig {
    pub sigma: f64,
    pub affinity_floor: f64,
    pub aggregation: Aggregation,
}

impl Default for RodeoConfig {
    fn default() -> Self {
        Self { sigma: 1.0, affinity_floor: 0.0, aggregation: Aggregation::Micro }
    }
}

impl RodeoConfig {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(MetricsError::BadSigma(self.sigma));
        }
        if !(0.0..1.0).contains(&self.affinity_floor) {
            return Err(MetricsError::BadFloor(self.affinity_floor));
        }
        Ok(())
    }
}

/// Solves the square assignment problem; `result[row] = column`.
///
/// O(n³) shortest augmenting path with row/column potentials.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    debug_assert!(cost.iter().all(|r| r.len() == n));
    // 1-based; row 0 / column 0 are sentinels.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for c in 1..=n {
                if used[c] {
                    continue;
                }
                let reduced = cost[r - 1][c - 1] - u[r] - v[c];
                if reduced < minv[c] {
                    minv[c] = reduced;
                    way[c] = col0;
                }
                if minv[c] < delta {
                    delta = minv[c];
                    col1 = c;
                }
            }
            for c in 0..=n {
                if used[c] {
                    u[owner[c]] += delta;
                    v[c] -= delta;
                } else {
                    minv[c] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut result = vec![0; n];
    for c in 1..=n {
        result[owner[c] - 1] = c - 1;
    }
    result
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matching {
    /// `(prediction index, ground-truth index)`, sorted by prediction.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_preds: Vec<usize>,
    pub unmatched_gts: Vec<usize>,
}

/// Cost of keeping a pair; pairs at or below the floor cost as much as
/// leaving both ends unmatched.
pub fn pair_cost(pred: &PixelBox, gt: &PixelBox, floor: f64) -> Option<f64> {
    let a = generalized_iou(pred, gt);
    (a > floor).then_some(1.0 - a)
}

/// Minimum-cost one-to-one matching on spatial affinity alone.
pub fn match_hungarian(preds: &[PixelBox], gts: &[PixelBox], cfg: &RodeoConfig) -> Matching {
    let (np, ng) = (preds.len(), gts.len());
    let n = np + ng;
    // Rows: predictions then ng dummies. Columns: ground truths then np dummies.
    let mut cost = vec![vec![0.0; n]; n];
    let mut allowed = vec![vec![false; ng]; np];
    for i in 0..n {
        for j in 0..n {
            cost[i][j] = match (i < np, j < ng) {
                (true, true) => match pair_cost(&preds[i], &gts[j], cfg.affinity_floor) {
                    Some(c) => {
                        allowed[i][j] = true;
                        c
                    }
                    None => 2.0,
                },
                (true, false) | (false, true) => 1.0,
                (false, false) => 0.0,
            };
        }
    }
    let assignment = min_cost_assignment(&cost);
    let mut m = Matching::default();
    let mut gt_used = vec![false; ng];
    for (i, &j) in assignment.iter().enumerate().take(np) {
        if j < ng && allowed[i][j] {
            m.pairs.push((i, j));
            gt_used[j] = true;
        } else {
            m.unmatched_preds.push(i);
        }
    }
    m.unmatched_gts = (0..ng).filter(|&j| !gt_used[j]).collect();
    m
}

pub fn localization_affinity(pred: &PixelBox, gt: &PixelBox, sigma: f64) -> f64 {
    let (px, py) = pred.center();
    let (gx, gy) = gt.center();
    let dist = (px - gx).hypot(py - gy);
    let diag = gt.diagonal();
    if diag == 0.0 {
        return if dist == 0.0 { 1.0 } else { 0.0 };
    }
    (-(dist / diag) / sigma).exp()
}

pub fn shape_affinity(pred: &PixelBox, gt: &PixelBox) -> f64 {
    let (pw, ph) = (pred.width(), pred.height());
    let (gw, gh) = (gt.width(), gt.height());
    let inter = pw.min(gw) * ph.min(gh);
    let union = pw * ph + gw * gh - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Pooled sums; merge is commutative and associative up to float rounding,
/// so callers reduce in a fixed order.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RodeoAccumulator {
    pub loc_sum: f64,
    pub shape_sum: f64,
    pub cls_correct: u64,
    pub pairs: u64,
    pub preds: u64,
    pub gts: u64,
}

impl RodeoAccumulator {
    pub fn merge(&mut self, other: &RodeoAccumulator) {
        self.loc_sum += other.loc_sum;
        self.shape_sum += other.shape_sum;
        self.cls_correct += other.cls_correct;
        self.pairs += other.pairs;
        self.preds += other.preds;
        self.gts += other.gts;
    }

    /// Sub-scores in `[0, 1]`: `(loc, shape, cls)`.
    fn unit_scores(&self) -> (f64, f64, f64) {
        let denom = (self.preds + self.gts) as f64;
        if self.pairs == 0 || denom == 0.0 {
            return (0.0, 0.0, 0.0);
        }
        let s = |sum: f64| (2.0 * sum / denom).clamp(0.0, 1.0);
        (s(self.loc_sum), s(self.shape_sum), s(self.cls_correct as f64))
    }

    pub fn scores(&self) -> RodeoScores {
        let (l, s, c) = self.unit_scores();
        RodeoScores::from_unit(l, s, c, self)
    }
}

fn harmonic_mean3(a: f64, b: f64, c: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 || c <= 0.0 {
        0.0
    } else {
        3.0 / (1.0 / a + 1.0 / b + 1.0 / c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RodeoScores {
    pub r_loc: f64,
    pub r_shape: f64,
    pub r_cls: f64,
    pub r_total: f64,
    pub matched_pairs: u64,
    pub unmatched_preds: u64,
    pub unmatched_gts: u64,
}

impl RodeoScores {
    fn from_unit(l: f64, s: f64, c: f64, acc: &RodeoAccumulator) -> Self {
        Self {
            r_loc: 100.0 * l,
            r_shape: 100.0 * s,
            r_cls: 100.0 * c,
            r_total: 100.0 * harmonic_mean3(l, s, c),
            matched_pairs: acc.pairs,
            unmatched_preds: acc.preds - acc.pairs,
            unmatched_gts: acc.gts - acc.pairs,
        }
    }
}

fn validate(preds: &[Detection], gts: &[GroundTruth]) -> Result<(), MetricsError> {
    for (index, p) in preds.iter().enumerate() {
        if !p.bbox.is_finite() || !p.bbox.is_ordered() {
            return Err(MetricsError::InvalidBox { what: "prediction", index });
        }
    }
    for (index, g) in gts.iter().enumerate() {
        if !g.bbox.is_finite() || !g.bbox.is_ordered() {
            return Err(MetricsError::InvalidBox { what: "ground truth", index });
        }
    }
    Ok(())
}

fn image_accumulator(preds: &[&Detection], gts: &[&GroundTruth], cfg: &RodeoConfig) -> RodeoAccumulator {
    let pb: Vec<PixelBox> = preds.iter().map(|p| p.bbox).collect();
    let gb: Vec<PixelBox> = gts.iter().map(|g| g.bbox).collect();
    let m = match_hungarian(&pb, &gb, cfg);
    let mut acc = RodeoAccumulator {
        preds: preds.len() as u64,
        gts: gts.len() as u64,
        pairs: m.pairs.len() as u64,
        ..Default::default()
    };
    for &(i, j) in &m.pairs {
        acc.loc_sum += localization_affinity(&pb[i], &gb[j], cfg.sigma);
        acc.shape_sum += shape_affinity(&pb[i], &gb[j]);
        acc.cls_correct += u64::from(preds[i].label == gts[j].label);
    }
    acc
}

/// Per-image accumulators, sorted by image id.
pub fn image_accumulators(
    preds: &[Detection],
    gts: &[GroundTruth],
    cfg: &RodeoConfig,
) -> Result<Vec<(String, RodeoAccumulator)>, MetricsError> {
    cfg.validate()?;
    validate(preds, gts)?;
    let mut images: BTreeMap<&str, (Vec<&Detection>, Vec<&GroundTruth>)> = BTreeMap::new();
    for p in preds {
        images.entry(p.image_id.as_str()).or_default().0.push(p);
    }
    for g in gts {
        images.entry(g.image_id.as_str()).or_default().1.push(g);
    }
    let groups: Vec<_> = images.into_iter().collect();
    Ok(groups.par_iter().map(|(id, (p, g))| (id.to_string(), image_accumulator(p, g, cfg))).collect())
}

/// Dataset-wide accumulator: per-image accumulators merged in image order.
pub fn rodeo_accumulate(
    preds: &[Detection],
    gts: &[GroundTruth],
    cfg: &RodeoConfig,
) -> Result<RodeoAccumulator, MetricsError> {
    let mut total = RodeoAccumulator::default();
    for (_, acc) in image_accumulators(preds, gts, cfg)? {
        total.merge(&acc);
    }
    Ok(total)
}

pub fn rodeo(preds: &[Detection], gts: &[GroundTruth], cfg: &RodeoConfig) -> Result<RodeoScores, MetricsError> {
    if gts.is_empty() {
        return Err(MetricsError::EmptyGroundTruth);
    }
    let per_image = image_accumulators(preds, gts, cfg)?;
    let mut total = RodeoAccumulator::default();
    for (_, acc) in &per_image {
        total.merge(acc);
    }
    match cfg.aggregation {
        Aggregation::Micro => Ok(total.scores()),
        Aggregation::Macro => {
            let n = per_image.len() as f64;
            let (mut l, mut s, mut c) = (0.0, 0.0, 0.0);
            for (_, acc) in &per_image {
                let (al, as_, ac) = acc.unit_scores();
                l += al;
                s += as_;
                c += ac;
            }
            Ok(RodeoScores::from_unit(l / n, s / n, c / n, &total))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerClassRodeo {
    pub scores: BTreeMap<String, RodeoScores>,
    /// Prediction labels with no ground truth; not scored.
    pub skipped: Vec<String>,
    /// Within one class every matched label is correct, so `r_cls` reduces
    /// to the matching rate.
    pub cls_is_matching_rate: bool,
}

/// Scores each ground-truth class on its own boxes.
pub fn rodeo_per_class(
    preds: &[Detection],
    gts: &[GroundTruth],
    cfg: &RodeoConfig,
) -> Result<PerClassRodeo, MetricsError> {
    if gts.is_empty() {
        return Err(MetricsError::EmptyGroundTruth);
    }
    let classes: BTreeSet<&str> = gts.iter().map(|g| g.label.as_str()).collect();
    let skipped: BTreeSet<&str> = preds.iter().map(|p| p.label.as_str()).filter(|l| !classes.contains(l)).collect();
    let mut scores = BTreeMap::new();
    for class in classes {
        let p: Vec<Detection> = preds.iter().filter(|d| d.label == class).cloned().collect();
        let g: Vec<GroundTruth> = gts.iter().filter(|d| d.label == class).cloned().collect();
        scores.insert(class.to_string(), rodeo(&p, &g, cfg)?);
    }
    Ok(PerClassRodeo { scores, skipped: skipped.into_iter().map(str::to_string).collect(), cls_is_matching_rate: true })
}
