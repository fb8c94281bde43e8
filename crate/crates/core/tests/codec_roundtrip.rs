use groundkit_core::geometry::{ImageDims, PixelBox};
use groundkit_core::token_codec::{decode_quad, encode_box, encode_coord, parse_sequence, DecodePolicy, LocToken};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn random_round_trip_within_half_bin() {
    let mut rng = ChaCha8Rng::seed_from_u64(2000);
    for _ in 0..20_000 {
        let dims = ImageDims::new(rng.random_range(1..5000), rng.random_range(1..5000)).unwrap();
        let (w, h) = (f64::from(dims.width()), f64::from(dims.height()));
        let mut xs = [rng.random_range(0.0..=w), rng.random_range(0.0..=w)];
        let mut ys = [rng.random_range(0.0..=h), rng.random_range(0.0..=h)];
        xs.sort_by(f64::total_cmp);
        ys.sort_by(f64::total_cmp);
        let b = PixelBox::new(xs[0], ys[0], xs[1], ys[1]);
        let q = encode_box(&b, dims).unwrap();
        let back = decode_quad(q, dims, DecodePolicy::Strict).unwrap().bbox;
        for (orig, got, ext) in [(b.x0, back.x0, w), (b.y0, back.y0, h), (b.x1, back.x1, w), (b.y1, back.y1, h)] {
            assert!((orig - got).abs() <= ext / 2000.0 + 1e-9, "{orig} -> {got} (extent {ext})");
        }
    }
}

#[test]
fn grid_aligned_round_trip_is_exact() {
    for (w, h) in [(1000, 1000), (2000, 500), (512, 512), (3000, 4000)] {
        let dims = ImageDims::new(w, h).unwrap();
        for k in (0..=1000u32).step_by(7) {
            let x = f64::from(k) * f64::from(w) / 1000.0;
            let y = f64::from(k) * f64::from(h) / 1000.0;
            let b = PixelBox::new(0.0, 0.0, x, y);
            let back = decode_quad(encode_box(&b, dims).unwrap(), dims, DecodePolicy::Strict).unwrap().bbox;
            assert_eq!(back, b);
        }
    }
}

#[test]
fn spot_checks() {
    assert_eq!(encode_coord(256.0, 512).unwrap(), LocToken::new(500));
    assert_eq!(encode_coord(0.0, 512).unwrap().bin(), 0);
    assert_eq!(encode_coord(512.0, 512).unwrap().bin(), 1000);
    let dims: ImageDims = "512x512".parse().unwrap();
    let toks = ["<loc_250>", "<loc_250>", "<loc_750>", "<loc_750>"];
    let p = parse_sequence(&toks, dims, DecodePolicy::Strict).unwrap();
    assert_eq!(p.boxes[0].bbox, PixelBox::new(128.0, 128.0, 384.0, 384.0));
}
