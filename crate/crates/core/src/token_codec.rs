//! Pixel boxes to and from discrete location tokens.
//!
//! A coordinate is normalized by its image extent into `[0, max_bin]` and
//! rounded to an integer bin; with the default quantizer that is 1001 bins,
//! `0..=1000`. Each bin has the surface form `<loc_K>`. A box is four
//! consecutive tokens `x0 y0 x1 y1`, so a model output of `4·M` tokens holds
//! `M` boxes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::CodecError;
use crate::geometry::{ImageDims, PixelBox};

pub const DEFAULT_MAX_BIN: u32 = 1000;

/// One quantized coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LocToken(u32);

impl LocToken {
    #[inline]
    pub const fn new(bin: u32) -> Self {
        Self(bin)
    }

    #[inline]
    pub const fn bin(self) -> u32 {
        self.0
    }

    /// Parses `<loc_K>` or a bare decimal `K`. `K` must not have leading zeros.
    /// The bin is not range-checked here; that depends on the quantizer.
    pub fn parse_surface(s: &str) -> Result<u64, CodecError> {
        let digits = s.strip_prefix("<loc_").and_then(|r| r.strip_suffix('>')).unwrap_or(s);
        let canonical = !digits.is_empty()
            && digits.bytes().all(|c| c.is_ascii_digit())
            && (digits == "0" || !digits.starts_with('0'));
        if !canonical {
            return Err(CodecError::Unparseable(s.to_string()));
        }
        digits.parse::<u64>().map_err(|_| CodecError::Unparseable(s.to_string()))
    }
}

impl fmt::Display for LocToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<loc_{}>", self.0)
    }
}

/// Parses a surface form against the default vocabulary `0..=1000`.
impl FromStr for LocToken {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bin = LocToken::parse_surface(s)?;
        if bin > u64::from(DEFAULT_MAX_BIN) {
            return Err(CodecError::BinOutOfRange { bin, max_bin: DEFAULT_MAX_BIN });
        }
        Ok(LocToken(bin as u32))
    }
}

impl Serialize for LocToken {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LocToken {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bin = LocToken::parse_surface(&s).map_err(serde::de::Error::custom)?;
        u32::try_from(bin).map(LocToken).map_err(|_| serde::de::Error::custom(format!("bin {bin} overflows")))
    }
}

/// Four tokens: top-left then bottom-right corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[LocToken; 4]", into = "[LocToken; 4]")]
pub struct TokenQuad {
    pub x0: LocToken,
    pub y0: LocToken,
    pub x1: LocToken,
    pub y1: LocToken,
}

impl From<[LocToken; 4]> for TokenQuad {
    fn from(t: [LocToken; 4]) -> Self {
        Self { x0: t[0], y0: t[1], x1: t[2], y1: t[3] }
    }
}

impl From<TokenQuad> for [LocToken; 4] {
    fn from(q: TokenQuad) -> Self {
        [q.x0, q.y0, q.x1, q.y1]
    }
}

impl TokenQuad {
    pub fn from_bins(x0: u32, y0: u32, x1: u32, y1: u32) -> Self {
        Self { x0: LocToken(x0), y0: LocToken(y0), x1: LocToken(x1), y1: LocToken(y1) }
    }

    pub fn bins(&self) -> [u32; 4] {
        [self.x0.0, self.y0.0, self.x1.0, self.y1.0]
    }

    pub fn is_canonical(&self) -> bool {
        self.x0 <= self.x1 && self.y0 <= self.y1
    }
}

/// Space-separated surface forms, e.g. `<loc_0> <loc_0> <loc_1000> <loc_1000>`.
impl fmt::Display for TokenQuad {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} {}", self.x0, self.y0, self.x1, self.y1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    #[default]
    HalfAwayFromZero,
    HalfEven,
    Floor,
}

impl Rounding {
    fn apply(self, v: f64) -> f64 {
        match self {
            Rounding::HalfAwayFromZero => v.round(),
            Rounding::HalfEven => v.round_ties_even(),
            Rounding::Floor => v.floor(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodePolicy {
    Strict,
    #[default]
    Repair,
}

impl FromStr for DecodePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(DecodePolicy::Strict),
            "repair" => Ok(DecodePolicy::Repair),
            other => Err(format!("unknown decode policy {other:?} (strict|repair)")),
        }
    }
}

/// Quantizer settings. The default is `0..=1000` with half-away-from-zero rounding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Quantizer {
    /// Largest bin; the vocabulary has `max_bin + 1` entries.
    pub max_bin: u32,
    pub rounding: Rounding,
}

impl Default for Quantizer {
    fn default() -> Self {
        Self { max_bin: DEFAULT_MAX_BIN, rounding: Rounding::default() }
    }
}

/// Anomaly found while decoding model output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    UnparseableToken { index: usize, text: String },
    BinOutOfRange { index: usize, bin: u64 },
    TrailingPartialQuad { tokens: usize },
    InvertedQuad { quad: usize, axis: &'static str },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::UnparseableToken { index, text } => {
                write!(f, "unparseable token {text:?} at position {index} (skipped)")
            }
            Diagnostic::BinOutOfRange { index, bin } => {
                write!(f, "bin {bin} out of range at position {index} (skipped)")
            }
            Diagnostic::TrailingPartialQuad { tokens } => {
                let unit = if *tokens == 1 { "token" } else { "tokens" };
                write!(f, "trailing partial quad ({tokens} {unit})")
            }
            Diagnostic::InvertedQuad { quad, axis } => {
                write!(f, "quad {quad} inverted on {axis}, swapped")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodedBox {
    pub bbox: PixelBox,
    pub quad: TokenQuad,
    pub repaired: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedSequence {
    pub boxes: Vec<DecodedBox>,
    pub diagnostics: Vec<Diagnostic>,
}

impl ParsedSequence {
    /// Number of boxes, `M`.
    pub fn count(&self) -> usize {
        self.boxes.len()
    }
}

impl Quantizer {
    pub fn new(max_bin: u32, rounding: Rounding) -> Result<Self, CodecError> {
        let q = Self { max_bin, rounding };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        if self.max_bin == 0 {
            return Err(CodecError::BadConfig("max_bin must be at least 1".into()));
        }
        Ok(())
    }

    pub fn vocabulary_size(&self) -> u64 {
        u64::from(self.max_bin) + 1
    }

    fn encode_named(&self, pixel: f64, extent: u32, coordinate: &'static str) -> Result<LocToken, CodecError> {
        let e = f64::from(extent);
        if !(0.0..=e).contains(&pixel) {
            return Err(CodecError::OutOfRange { coordinate, value: pixel, extent });
        }
        let scaled = pixel * f64::from(self.max_bin) / e;
        let bin = self.rounding.apply(scaled).clamp(0.0, f64::from(self.max_bin));
        Ok(LocToken(bin as u32))
    }

    /// Quantizes one coordinate: `bin = round(pixel / extent · max_bin)`.
    pub fn encode_coord(&self, pixel: f64, extent: u32) -> Result<LocToken, CodecError> {
        self.encode_named(pixel, extent, "pixel")
    }

    /// Inverse map for one bin: `pixel = bin · extent / max_bin`.
    pub fn decode_coord(&self, token: LocToken, extent: u32) -> Result<f64, CodecError> {
        self.check_bin(u64::from(token.0))?;
        Ok(f64::from(token.0) * f64::from(extent) / f64::from(self.max_bin))
    }

    pub fn encode_box(&self, b: &PixelBox, dims: ImageDims) -> Result<TokenQuad, CodecError> {
        let (w, h) = (dims.width(), dims.height());
        let quad = TokenQuad {
            x0: self.encode_named(b.x0, w, "x0")?,
            y0: self.encode_named(b.y0, h, "y0")?,
            x1: self.encode_named(b.x1, w, "x1")?,
            y1: self.encode_named(b.y1, h, "y1")?,
        };
        if let Some((axis, lo, hi)) = inverted_axis(&quad) {
            return Err(CodecError::Inverted { quad: 0, axis, lo, hi });
        }
        Ok(quad)
    }

    /// Decodes a quad. Inverted quads are rejected in strict mode and have the
    /// offending pair swapped in repair mode.
    pub fn decode_quad(&self, q: TokenQuad, dims: ImageDims, policy: DecodePolicy) -> Result<DecodedBox, CodecError> {
        self.decode_quad_at(q, dims, policy, 0)
    }

    fn decode_quad_at(
        &self,
        q: TokenQuad,
        dims: ImageDims,
        policy: DecodePolicy,
        index: usize,
    ) -> Result<DecodedBox, CodecError> {
        for t in [q.x0, q.y0, q.x1, q.y1] {
            self.check_bin(u64::from(t.0))?;
        }
        let mut fixed = q;
        let mut repaired = false;
        if let Some((axis, lo, hi)) = inverted_axis(&q) {
            if policy == DecodePolicy::Strict {
                return Err(CodecError::Inverted { quad: index, axis, lo, hi });
            }
            if fixed.x0 > fixed.x1 {
                std::mem::swap(&mut fixed.x0, &mut fixed.x1);
            }
            if fixed.y0 > fixed.y1 {
                std::mem::swap(&mut fixed.y0, &mut fixed.y1);
            }
            repaired = true;
        }
        let (w, h) = (dims.width(), dims.height());
        let bbox = PixelBox::new(
            self.decode_coord(fixed.x0, w)?,
            self.decode_coord(fixed.y0, h)?,
            self.decode_coord(fixed.x1, w)?,
            self.decode_coord(fixed.y1, h)?,
        );
        Ok(DecodedBox { bbox, quad: fixed, repaired })
    }

    fn check_bin(&self, bin: u64) -> Result<(), CodecError> {
        if bin > u64::from(self.max_bin) {
            return Err(CodecError::BinOutOfRange { bin, max_bin: self.max_bin });
        }
        Ok(())
    }

    /// Groups model-emitted tokens into consecutive quads.
    ///
    /// Repair mode never fails: bad tokens are skipped, inverted quads are
    /// swapped and a trailing partial quad is dropped, each with a diagnostic.
    /// Strict mode fails on the first of those.
    pub fn parse_sequence<S: AsRef<str>>(
        &self,
        tokens: &[S],
        dims: ImageDims,
        policy: DecodePolicy,
    ) -> Result<ParsedSequence, CodecError> {
        let mut out = ParsedSequence::default();
        let mut bins = Vec::with_capacity(tokens.len());
        for (index, raw) in tokens.iter().enumerate() {
            let text = raw.as_ref();
            let parsed = LocToken::parse_surface(text).and_then(|bin| {
                self.check_bin(bin)?;
                Ok(bin as u32)
            });
            match parsed {
                Ok(bin) => bins.push(bin),
                Err(e) if policy == DecodePolicy::Strict => {
                    return Err(CodecError::AtToken { index, source: Box::new(e) })
                }
                Err(CodecError::BinOutOfRange { bin, .. }) => {
                    out.diagnostics.push(Diagnostic::BinOutOfRange { index, bin })
                }
                Err(_) => out.diagnostics.push(Diagnostic::UnparseableToken { index, text: text.to_string() }),
            }
        }
        let trailing = bins.len() % 4;
        if trailing != 0 {
            if policy == DecodePolicy::Strict {
                return Err(CodecError::PartialQuad { len: bins.len(), trailing });
            }
            out.diagnostics.push(Diagnostic::TrailingPartialQuad { tokens: trailing });
        }
        for (i, c) in bins.chunks_exact(4).enumerate() {
            let quad = TokenQuad::from_bins(c[0], c[1], c[2], c[3]);
            let decoded = self.decode_quad_at(quad, dims, policy, i)?;
            if decoded.repaired {
                let axis = inverted_axis(&quad).map(|a| a.0).unwrap_or("x");
                out.diagnostics.push(Diagnostic::InvertedQuad { quad: i, axis });
            }
            out.boxes.push(decoded);
        }
        Ok(out)
    }
}

fn inverted_axis(q: &TokenQuad) -> Option<(&'static str, u32, u32)> {
    match (q.x0 > q.x1, q.y0 > q.y1) {
        (true, true) => Some(("x,y", q.x0.0, q.x1.0)),
        (true, false) => Some(("x", q.x0.0, q.x1.0)),
        (false, true) => Some(("y", q.y0.0, q.y1.0)),
        (false, false) => None,
    }
}

/// Splits raw model text into token strings. Accepts whitespace- or
/// comma-separated tokens as well as concatenated `<loc_1><loc_2>` runs.
pub fn split_tokens(text: &str) -> Vec<String> {
    text.replace("><", "> <")
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// [`Quantizer::encode_coord`] with the default quantizer.
pub fn encode_coord(pixel: f64, extent: u32) -> Result<LocToken, CodecError> {
    Quantizer::default().encode_coord(pixel, extent)
}

/// [`Quantizer::encode_box`] with the default quantizer.
pub fn encode_box(b: &PixelBox, dims: ImageDims) -> Result<TokenQuad, CodecError> {
    Quantizer::default().encode_box(b, dims)
}

/// [`Quantizer::decode_quad`] with the default quantizer.
pub fn decode_quad(q: TokenQuad, dims: ImageDims, policy: DecodePolicy) -> Result<DecodedBox, CodecError> {
    Quantizer::default().decode_quad(q, dims, policy)
}

/// [`Quantizer::parse_sequence`] with the default quantizer.
pub fn parse_sequence<S: AsRef<str>>(
    tokens: &[S],
    dims: ImageDims,
    policy: DecodePolicy,
) -> Result<ParsedSequence, CodecError> {
    Quantizer::default().parse_sequence(tokens, dims, policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::validate_box;
    use proptest::prelude::*;

    fn dims(w: u32, h: u32) -> ImageDims {
        ImageDims::new(w, h).unwrap()
    }

    #[test]
    fn encode_coord_examples() {
        assert_eq!(encode_coord(0.0, 512).unwrap().bin(), 0);
        assert_eq!(encode_coord(512.0, 512).unwrap().bin(), 1000);
        assert_eq!(encode_coord(256.0, 512).unwrap().bin(), 500);
        assert_eq!(encode_coord(1.0, 3).unwrap().bin(), 333);
    }

    #[test]
    fn encode_coord_rejects_out_of_range() {
        let err = encode_coord(513.0, 512).unwrap_err();
        assert!(matches!(err, CodecError::OutOfRange { coordinate: "pixel", .. }));
        assert!(encode_coord(-0.5, 512).is_err());
        assert!(encode_coord(f64::NAN, 512).is_err());
        let err = encode_box(&PixelBox::new(0.0, 0.0, 10.0, 600.0), dims(512, 512)).unwrap_err();
        assert!(matches!(err, CodecError::OutOfRange { coordinate: "y1", .. }));
    }

    #[test]
    fn encode_box_examples() {
        let q = encode_box(&PixelBox::new(0.0, 0.0, 512.0, 512.0), dims(512, 512)).unwrap();
        assert_eq!(q.bins(), [0, 0, 1000, 1000]);
        let q = encode_box(&PixelBox::new(128.0, 128.0, 384.0, 384.0), dims(512, 512)).unwrap();
        assert_eq!(q.bins(), [250, 250, 750, 750]);
        let q = encode_box(&PixelBox::new(0.0, 0.0, 100.0, 200.0), dims(1000, 1000)).unwrap();
        assert_eq!(q.bins(), [0, 0, 100, 200]);
    }

    #[test]
    fn decode_quad_examples() {
        let d = dims(512, 512);
        let b = decode_quad(TokenQuad::from_bins(0, 0, 1000, 1000), d, DecodePolicy::Strict).unwrap();
        assert_eq!(b.bbox, PixelBox::new(0.0, 0.0, 512.0, 512.0));
        let b = decode_quad(TokenQuad::from_bins(250, 250, 750, 750), d, DecodePolicy::Strict).unwrap();
        assert_eq!(b.bbox, PixelBox::new(128.0, 128.0, 384.0, 384.0));
        assert!(!b.repaired);

        let inverted = TokenQuad::from_bins(750, 250, 250, 750);
        let b = decode_quad(inverted, d, DecodePolicy::Repair).unwrap();
        assert_eq!(b.bbox, PixelBox::new(128.0, 128.0, 384.0, 384.0));
        assert!(b.repaired);
        assert!(matches!(decode_quad(inverted, d, DecodePolicy::Strict), Err(CodecError::Inverted { axis: "x", .. })));
    }

    #[test]
    fn surface_form_is_exact() {
        assert_eq!(LocToken::new(42).to_string(), "<loc_42>");
        assert_eq!("<loc_42>".parse::<LocToken>().unwrap().bin(), 42);
        assert_eq!("42".parse::<LocToken>().unwrap().bin(), 42);
        assert_eq!("<loc_0>".parse::<LocToken>().unwrap().bin(), 0);
        for bad in ["<loc_042>", "<loc_>", "<loc_-1>", "loc_3", "<loc_3", "<LOC_3>", "+3", "007", ""] {
            assert!(bad.parse::<LocToken>().is_err(), "{bad}");
        }
        assert!(matches!("<loc_1001>".parse::<LocToken>(), Err(CodecError::BinOutOfRange { bin: 1001, .. })));
    }

    #[test]
    fn parse_sequence_examples() {
        let d = dims(512, 512);
        let one = parse_sequence(&["<loc_0>", "<loc_0>", "<loc_1000>", "<loc_1000>"], d, DecodePolicy::Strict).unwrap();
        assert_eq!(one.count(), 1);
        assert_eq!(one.boxes[0].bbox, PixelBox::new(0.0, 0.0, 512.0, 512.0));
        assert!(one.diagnostics.is_empty());

        let empty: [&str; 0] = [];
        let none = parse_sequence(&empty, d, DecodePolicy::Strict).unwrap();
        assert_eq!(none.count(), 0);
        assert!(none.diagnostics.is_empty());

        let toks = ["<loc_0>", "<loc_0>", "<loc_500>", "<loc_500>", "<loc_9>"];
        let partial = parse_sequence(&toks, d, DecodePolicy::Repair).unwrap();
        assert_eq!(partial.count(), 1);
        assert_eq!(partial.diagnostics, vec![Diagnostic::TrailingPartialQuad { tokens: 1 }]);
        assert_eq!(partial.diagnostics[0].to_string(), "trailing partial quad (1 token)");
        assert!(matches!(
            parse_sequence(&toks, d, DecodePolicy::Strict),
            Err(CodecError::PartialQuad { len: 5, trailing: 1 })
        ));
    }

    #[test]
    fn strict_rejects_each_anomaly() {
        let d = dims(100, 100);
        let bad_text = ["<loc_1>", "cat", "<loc_2>", "<loc_3>"];
        assert!(matches!(
            parse_sequence(&bad_text, d, DecodePolicy::Strict),
            Err(CodecError::AtToken { index: 1, .. })
        ));
        let too_big = ["<loc_1>", "<loc_1500>", "<loc_2>", "<loc_3>"];
        assert!(parse_sequence(&too_big, d, DecodePolicy::Strict).is_err());
        let inverted = ["<loc_9>", "<loc_1>", "<loc_2>", "<loc_3>"];
        assert!(matches!(
            parse_sequence(&inverted, d, DecodePolicy::Strict),
            Err(CodecError::Inverted { quad: 0, .. })
        ));
    }

    #[test]
    fn repair_skips_bad_tokens_and_swaps() {
        let d = dims(100, 100);
        let toks = ["<loc_9>", "junk", "<loc_1>", "<loc_1500>", "<loc_2>", "<loc_3>"];
        let out = parse_sequence(&toks, d, DecodePolicy::Repair).unwrap();
        assert_eq!(out.count(), 1);
        assert_eq!(out.boxes[0].quad.bins(), [2, 1, 9, 3]);
        assert!(out.boxes[0].repaired);
        assert_eq!(out.diagnostics.len(), 3);
    }

    #[test]
    fn split_tokens_handles_concatenation() {
        assert_eq!(split_tokens("<loc_1><loc_2> <loc_3>,<loc_4>"), vec!["<loc_1>", "<loc_2>", "<loc_3>", "<loc_4>"]);
        assert!(split_tokens("   ").is_empty());
    }

    #[test]
    fn configurable_quantizer() {
        let q = Quantizer::new(999, Rounding::Floor).unwrap();
        assert_eq!(q.encode_coord(512.0, 512).unwrap().bin(), 999);
        assert_eq!(q.encode_coord(0.9, 1).unwrap().bin(), 899);
        assert!(Quantizer::new(0, Rounding::Floor).is_err());
        let even = Quantizer::new(2, Rounding::HalfEven).unwrap();
        // 1/4 · 2 = 0.5 rounds to 0 under ties-to-even, 1 away from zero.
        assert_eq!(even.encode_coord(1.0, 4).unwrap().bin(), 0);
        assert_eq!(Quantizer::new(2, Rounding::HalfAwayFromZero).unwrap().encode_coord(1.0, 4).unwrap().bin(), 1);
    }

    #[test]
    fn quad_serializes_as_surface_forms() {
        let q = TokenQuad::from_bins(1, 2, 3, 4);
        let s = serde_json::to_string(&q).unwrap();
        assert_eq!(s, r#"["<loc_1>","<loc_2>","<loc_3>","<loc_4>"]"#);
        assert_eq!(serde_json::from_str::<TokenQuad>(&s).unwrap(), q);
    }

    fn arb_box_dims() -> impl Strategy<Value = (PixelBox, ImageDims)> {
        (1u32..4000, 1u32..4000).prop_flat_map(|(w, h)| {
            let (fw, fh) = (f64::from(w), f64::from(h));
            (0.0..=fw, 0.0..=fw, 0.0..=fh, 0.0..=fh).prop_map(move |(a, b, c, d)| {
                (PixelBox::new(a.min(b), c.min(d), a.max(b), c.max(d)), ImageDims::new(w, h).unwrap())
            })
        })
    }

    proptest! {
        #[test]
        fn idempotent_encoding((b, d) in arb_box_dims()) {
            let q = encode_box(&b, d).unwrap();
            let back = decode_quad(q, d, DecodePolicy::Strict).unwrap().bbox;
            prop_assert_eq!(encode_box(&back, d).unwrap(), q);
        }

        #[test]
        fn encode_is_monotone(extent in 1u32..5000, a in 0.0..1.0f64, b in 0.0..1.0f64) {
            let e = f64::from(extent);
            let (lo, hi) = (a.min(b) * e, a.max(b) * e);
            prop_assert!(encode_coord(lo, extent).unwrap() <= encode_coord(hi, extent).unwrap());
        }

        #[test]
        fn repair_never_fails_or_emits_invalid_boxes(
            w in 1u32..2000,
            h in 1u32..2000,
            toks in proptest::collection::vec(
                prop_oneof![
                    (0u32..1200).prop_map(|b| format!("<loc_{b}>")),
                    "[a-z<>_0-9]{0,8}",
                ],
                0..30,
            ),
        ) {
            let d = ImageDims::new(w, h).unwrap();
            let out = parse_sequence(&toks, d, DecodePolicy::Repair).unwrap();
            for b in &out.boxes {
                prop_assert!(validate_box(&b.bbox, d).is_valid());
            }
        }
    }
}
