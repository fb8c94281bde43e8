//! Seeded synthetic inputs shared by the benchmarks.

use groundkit_core::dataset_ingest::AnnotationRecord;
use groundkit_core::geometry::{ImageDims, PixelBox};
use groundkit_core::metrics_map::{Detection, GroundTruth};
use groundkit_core::ScoredBox;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const LABELS: [&str; 6] =
    ["Aortic enlargement", "Cardiomegaly", "Nodule/Mass", "Pleural effusion", "Lung Opacity", "Atelectasis"];

fn rand_box(rng: &mut ChaCha8Rng, extent: f64) -> PixelBox {
    let (x, y) = (rng.random_range(0.0..extent * 0.8), rng.random_range(0.0..extent * 0.8));
    let (w, h) = (rng.random_range(8.0..extent * 0.2), rng.random_range(8.0..extent * 0.2));
    PixelBox::new(x, y, x + w, y + h)
}

fn jitter(rng: &mut ChaCha8Rng, b: &PixelBox, amount: f64) -> PixelBox {
    let mut d = || rng.random_range(-amount..amount);
    let (x0, y0) = (b.x0 + d(), b.y0 + d());
    let (x1, y1) = (b.x1 + d(), b.y1 + d());
    PixelBox::new(x0.min(x1 - 1.0), y0.min(y1 - 1.0), x1, y1)
}

fn inside(b: PixelBox, extent: f64) -> PixelBox {
    let c = b.coords().map(|v| v.clamp(0.0, extent));
    PixelBox::from_coords(c)
}

/// Boxes in image-pixel space for one square image.
pub fn random_boxes(seed: u64, n: usize, extent: f64) -> Vec<PixelBox> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rand_box(&mut rng, extent)).collect()
}

/// Overlapping annotator boxes around a few findings, all on one image.
pub fn annotator_boxes(seed: u64, findings: usize, annotators: usize) -> Vec<ScoredBox> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(findings * annotators);
    for _ in 0..findings {
        let b = rand_box(&mut rng, 2048.0);
        let label = LABELS[rng.random_range(0..LABELS.len())];
        for a in 0..annotators {
            out.push(ScoredBox::annotation(jitter(&mut rng, &b, 20.0), label, Some(format!("R{a}"))));
        }
    }
    out
}

/// Annotation records for `images` images with three annotators each.
pub fn annotation_records(seed: u64, images: usize) -> Vec<AnnotationRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = ImageDims::new(2048, 2048).unwrap();
    let mut out = Vec::new();
    for i in 0..images {
        let image_id = format!("img{i:05}");
        for _ in 0..rng.random_range(1..4) {
            let b = rand_box(&mut rng, 2000.0);
            let label = LABELS[rng.random_range(0..LABELS.len())];
            for a in 0..3 {
                out.push(AnnotationRecord {
                    image_id: image_id.clone(),
                    dims,
                    label: label.to_string(),
                    bbox: Some(inside(jitter(&mut rng, &b, 15.0), 2048.0)),
                    annotator: Some(format!("R{a}")),
                });
            }
        }
    }
    out
}

/// Ground truth plus noisy, scored detections with some false positives.
pub fn detection_scene(seed: u64, images: usize) -> (Vec<Detection>, Vec<GroundTruth>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut dets, mut gts) = (Vec::new(), Vec::new());
    for i in 0..images {
        let image_id = format!("img{i:05}");
        for _ in 0..rng.random_range(1..5) {
            let b = rand_box(&mut rng, 1024.0);
            let label = LABELS[rng.random_range(0..LABELS.len())];
            gts.push(GroundTruth { image_id: image_id.clone(), label: label.into(), bbox: b });
            if rng.random_bool(0.7) {
                let bbox = jitter(&mut rng, &b, 30.0);
                dets.push(Detection {
                    image_id: image_id.clone(),
                    label: label.into(),
                    bbox,
                    confidence: rng.random(),
                });
            }
        }
        for _ in 0..rng.random_range(0..3) {
            let label = LABELS[rng.random_range(0..LABELS.len())];
            let bbox = rand_box(&mut rng, 1024.0);
            dets.push(Detection { image_id: image_id.clone(), label: label.into(), bbox, confidence: rng.random() });
        }
    }
    (dets, gts)
}
