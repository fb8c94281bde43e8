//! Exhaustive reference for the RoDeO matching objective.

#![allow(dead_code)]

use groundkit_core::geometry::{generalized_iou, PixelBox};

/// Cost of a partial matching: `1 - GIoU` per kept pair plus 1 per
/// unmatched box on either side. Pairs at or below `floor` are not allowed.
pub fn matching_cost(preds: &[PixelBox], gts: &[PixelBox], pairs: &[(usize, usize)], floor: f64) -> Option<f64> {
    let mut cost = (preds.len() + gts.len() - 2 * pairs.len()) as f64;
    for &(i, j) in pairs {
        let a = generalized_iou(&preds[i], &gts[j]);
        if a <= floor {
            return None;
        }
        cost += 1.0 - a;
    }
    Some(cost)
}

/// Minimum over every partial injection of predictions into ground truths.
pub fn exhaustive_min_cost(preds: &[PixelBox], gts: &[PixelBox], floor: f64) -> f64 {
    fn go(
        i: usize,
        preds: &[PixelBox],
        gts: &[PixelBox],
        used: &mut Vec<bool>,
        pairs: &mut Vec<(usize, usize)>,
        floor: f64,
        best: &mut f64,
    ) {
        if i == preds.len() {
            if let Some(c) = matching_cost(preds, gts, pairs, floor) {
                *best = best.min(c);
            }
            return;
        }
        go(i + 1, preds, gts, used, pairs, floor, best);
        for j in 0..gts.len() {
            if !used[j] {
                used[j] = true;
                pairs.push((i, j));
                go(i + 1, preds, gts, used, pairs, floor, best);
                pairs.pop();
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(0, preds, gts, &mut vec![false; gts.len()], &mut Vec::new(), floor, &mut best);
    best
}
