//! Brute-force AP reference on integer-coordinate instances.
//!
//! IoU comparisons use cross-multiplied integers, every cutoff rematches
//! from scratch, and precision is compared as exact fractions. Only the
//! final averages are computed in floating point.

#![allow(dead_code)]

use groundkit_core::geometry::PixelBox;
use groundkit_core::metrics_map::{Detection, GroundTruth};
use rand::Rng;

#[derive(Debug, Clone)]
pub struct ODet {
    pub image: usize,
    pub class: usize,
    pub bbox: [i64; 4],
    pub conf: f64,
}

#[derive(Debug, Clone)]
pub struct OGt {
    pub image: usize,
    pub class: usize,
    pub bbox: [i64; 4],
}

#[derive(Debug, Clone, Default)]
pub struct Instance {
    pub dets: Vec<ODet>,
    pub gts: Vec<OGt>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Points101,
    Continuous,
}

fn area(b: &[i64; 4]) -> i64 {
    (b[2] - b[0]).max(0) * (b[3] - b[1]).max(0)
}

/// `(intersection, union)` as integers.
fn overlap(a: &[i64; 4], b: &[i64; 4]) -> (i64, i64) {
    let w = (a[2].min(b[2]) - a[0].max(b[0])).max(0);
    let h = (a[3].min(b[3]) - a[1].max(b[1])).max(0);
    let inter = w * h;
    (inter, area(a) + area(b) - inter)
}

/// IoU ≥ pct/100, exactly.
fn passes(ov: (i64, i64), pct: i64) -> bool {
    ov.1 > 0 && ov.0 * 100 >= pct * ov.1
}

/// `a > b` for fractions `(num, den)` with positive denominators.
fn frac_gt(a: (i64, i64), b: (i64, i64)) -> bool {
    a.0 * b.1 > b.0 * a.1
}

/// Ranked detections of one class: confidence descending.
fn ranked(inst: &Instance, class: usize) -> Vec<&ODet> {
    let mut d: Vec<&ODet> = inst.dets.iter().filter(|d| d.class == class).collect();
    d.sort_by(|a, b| b.conf.partial_cmp(&a.conf).unwrap());
    d
}

/// True positives among the first `k` ranked detections, matching anew.
fn tp_at(ranked: &[&ODet], gts: &[&OGt], k: usize, pct: i64) -> i64 {
    let mut used = vec![false; gts.len()];
    let mut tp = 0;
    for d in &ranked[..k] {
        let mut best: Option<(usize, (i64, i64))> = None;
        for (j, g) in gts.iter().enumerate() {
            if used[j] || g.image != d.image {
                continue;
            }
            let ov = overlap(&d.bbox, &g.bbox);
            if !passes(ov, pct) {
                continue;
            }
            match best {
                Some((_, b)) if !frac_gt(ov, b) => {}
                _ => best = Some((j, ov)),
            }
        }
        if let Some((j, _)) = best {
            used[j] = true;
            tp += 1;
        }
    }
    tp
}

/// AP of one class at IoU threshold `pct/100`; `None` if the class has no
/// ground truth.
pub fn class_ap(inst: &Instance, class: usize, pct: i64, mode: Mode) -> Option<f64> {
    let gts: Vec<&OGt> = inst.gts.iter().filter(|g| g.class == class).collect();
    let n_gt = gts.len() as i64;
    if n_gt == 0 {
        return None;
    }
    let r = ranked(inst, class);
    // (tp, cutoff) for every cutoff 1..=n.
    let curve: Vec<(i64, i64)> = (1..=r.len()).map(|k| (tp_at(&r, &gts, k, pct), k as i64)).collect();
    // Best precision over cutoffs satisfying `ok`.
    let best_prec = |ok: &dyn Fn(i64) -> bool| -> f64 {
        let mut best: Option<(i64, i64)> = None;
        for &(tp, k) in &curve {
            if ok(tp) && best.is_none_or(|b| frac_gt((tp, k), b)) {
                best = Some((tp, k));
            }
        }
        best.map_or(0.0, |(tp, k)| tp as f64 / k as f64)
    };
    let ap = match mode {
        Mode::Points101 => {
            let sum: f64 = (0..=100i64).map(|ri| best_prec(&|tp| tp * 100 >= ri * n_gt)).sum();
            sum / 101.0
        }
        Mode::Continuous => {
            // One recall step of 1/n_gt per true positive reached.
            let max_tp = curve.iter().map(|c| c.0).max().unwrap_or(0);
            let sum: f64 = (1..=max_tp).map(|t| best_prec(&|tp| tp >= t)).sum();
            sum / n_gt as f64
        }
    };
    Some(ap)
}

pub const PCTS: [i64; 10] = [50, 55, 60, 65, 70, 75, 80, 85, 90, 95];

/// Mean over ground-truth classes at each threshold.
pub fn map_per_threshold(inst: &Instance, mode: Mode) -> Vec<f64> {
    let mut classes: Vec<usize> = inst.gts.iter().map(|g| g.class).collect();
    classes.sort_unstable();
    classes.dedup();
    PCTS.iter()
        .map(|&p| {
            let s: f64 = classes.iter().map(|&c| class_ap(inst, c, p, mode).unwrap()).sum();
            s / classes.len() as f64
        })
        .collect()
}

fn rand_box(rng: &mut impl Rng) -> [i64; 4] {
    let x0 = rng.random_range(0..30);
    let y0 = rng.random_range(0..30);
    [x0, y0, x0 + rng.random_range(1..12), y0 + rng.random_range(1..12)]
}

fn jitter(rng: &mut impl Rng, b: &[i64; 4]) -> [i64; 4] {
    let mut j = |v: i64| v + rng.random_range(-2..=2);
    let (x0, y0) = (j(b[0]), j(b[1]));
    let (x1, y1) = (j(b[2]).max(x0 + 1), j(b[3]).max(y0 + 1));
    [x0, y0, x1, y1]
}

/// ≤10 images, ≤5 boxes per side per image, ≤3 classes, distinct
/// confidences. Detections are often jittered copies of ground truth.
pub fn random_instance(rng: &mut impl Rng) -> Instance {
    let n_img = rng.random_range(1..=10);
    let n_cls = rng.random_range(1..=3);
    let mut inst = Instance::default();
    for image in 0..n_img {
        let n_gt = rng.random_range(0..=5);
        let start = inst.gts.len();
        for _ in 0..n_gt {
            inst.gts.push(OGt { image, class: rng.random_range(0..n_cls), bbox: rand_box(rng) });
        }
        for _ in 0..rng.random_range(0..=5) {
            let (class, bbox) = if n_gt > 0 && rng.random_bool(0.7) {
                let g = inst.gts[start + rng.random_range(0..n_gt)].clone();
                let class = if rng.random_bool(0.9) { g.class } else { rng.random_range(0..n_cls) };
                (class, jitter(rng, &g.bbox))
            } else {
                (rng.random_range(0..n_cls), rand_box(rng))
            };
            inst.dets.push(ODet { image, class, bbox, conf: 0.0 });
        }
    }
    if inst.gts.is_empty() {
        inst.gts.push(OGt { image: 0, class: 0, bbox: rand_box(rng) });
    }
    // Distinct confidences in (0, 1).
    let n = inst.dets.len();
    let mut levels: Vec<usize> = (1..=n).collect();
    for i in (1..n).rev() {
        levels.swap(i, rng.random_range(0..=i));
    }
    for (d, l) in inst.dets.iter_mut().zip(levels) {
        d.conf = l as f64 / (n + 1) as f64;
    }
    inst
}

fn to_box(b: &[i64; 4]) -> PixelBox {
    PixelBox::new(b[0] as f64, b[1] as f64, b[2] as f64, b[3] as f64)
}

pub fn to_core(inst: &Instance) -> (Vec<Detection>, Vec<GroundTruth>) {
    let dets = inst
        .dets
        .iter()
        .map(|d| Detection {
            image_id: format!("img{:02}", d.image),
            label: format!("class{}", d.class),
            bbox: to_box(&d.bbox),
            confidence: d.conf,
        })
        .collect();
    let gts = inst
        .gts
        .iter()
        .map(|g| GroundTruth {
            image_id: format!("img{:02}", g.image),
            label: format!("class{}", g.class),
            bbox: to_box(&g.bbox),
        })
        .collect();
    (dets, gts)
}
