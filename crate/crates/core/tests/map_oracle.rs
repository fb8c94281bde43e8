mod support;

use groundkit_core::geometry::PixelBox;
use groundkit_core::metrics_map::{average_precision, map_suite, Detection, GroundTruth, Interpolation};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::map_oracle::{class_ap, map_per_threshold, random_instance, to_core, Mode, PCTS};

fn check(seed: u64, n: usize, mode: Mode, interp: Interpolation) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut informative = 0;
    for case in 0..n {
        let inst = random_instance(&mut rng);
        let (dets, gts) = to_core(&inst);
        let got = map_suite(&dets, &gts, interp).unwrap();
        let want = map_per_threshold(&inst, mode);
        for (t, (g, w)) in got.map_per_threshold.iter().zip(&want).enumerate() {
            assert!((g - w).abs() <= 1e-9, "case {case} threshold {}: {g} vs oracle {w}\n{inst:?}", PCTS[t]);
        }
        for (label, aps) in &got.per_class {
            let class: usize = label.trim_start_matches("class").parse().unwrap();
            for (ap, &pct) in aps.iter().zip(&PCTS) {
                let w = class_ap(&inst, class, pct, mode).unwrap();
                assert!((ap - w).abs() <= 1e-9, "case {case} {label}@{pct}: {ap} vs {w}");
            }
        }
        let mean = got.map_per_threshold.iter().sum::<f64>() / 10.0;
        assert_eq!(got.map50_95, mean);
        assert_eq!(got.map50, got.map_per_threshold[0]);
        assert_eq!(got.map75, got.map_per_threshold[5]);
        informative += usize::from(got.map50 > 0.0 && got.map50 < 1.0 && got.map50 != got.map50_95);
    }
    assert!(informative * 2 > n, "only {informative} of {n} instances exercise partial matches");
}

#[test]
fn matches_oracle_101pt() {
    check(0x5eed_0101, 1500, Mode::Points101, Interpolation::Points101);
}

#[test]
fn matches_oracle_continuous() {
    check(0x5eed_c0a7, 1500, Mode::Continuous, Interpolation::Continuous);
}

#[test]
fn hand_case_one_tp_one_fp() {
    let flags = [true, false];
    let p101 = average_precision(&flags, 2, Interpolation::Points101).unwrap();
    let cont = average_precision(&flags, 2, Interpolation::Continuous).unwrap();
    assert!((p101 - 51.0 / 101.0).abs() < 1e-12);
    assert!((cont - 0.5).abs() < 1e-12);
}

#[test]
fn hand_case_through_suite() {
    let b = |x: f64| PixelBox::new(x, 0.0, x + 10.0, 10.0);
    let gts = vec![
        GroundTruth { image_id: "a".into(), label: "c".into(), bbox: b(0.0) },
        GroundTruth { image_id: "a".into(), label: "c".into(), bbox: b(50.0) },
    ];
    let dets = vec![
        Detection { image_id: "a".into(), label: "c".into(), bbox: b(0.0), confidence: 0.9 },
        Detection { image_id: "a".into(), label: "c".into(), bbox: b(200.0), confidence: 0.8 },
    ];
    let r = map_suite(&dets, &gts, Interpolation::Points101).unwrap();
    assert!((r.map50 - 51.0 / 101.0).abs() < 1e-12);
    let r = map_suite(&dets, &gts, Interpolation::Continuous).unwrap();
    assert!((r.map50_95 - 0.5).abs() < 1e-12);
}
