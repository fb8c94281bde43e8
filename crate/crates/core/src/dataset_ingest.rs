//! Annotation loading and grounding-sample assembly.
//!
//! Records are fused per `(image, label)`, encoded to location tokens and
//! paired with a prompt. Images whose only records are "no finding" markers
//! produce no samples.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::box_fusion::{fuse_annotations, FusionConfig, ImageAnnotations, ScoredBox};
use crate::error::IngestError;
use crate::geometry::{validate_box, ImageDims, PixelBox};
use crate::knowledge_prompts::{DescriptionTable, GroundingTemplates, PromptMode};
use crate::token_codec::{Quantizer, TokenQuad};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub image_id: String,
    pub dims: ImageDims,
    pub label: String,
    /// `None` for image-level markers such as "No finding".
    #[serde(rename = "box")]
    pub bbox: Option<PixelBox>,
    pub annotator: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnnotationFormat {
    Csv,
    CocoJson,
}

impl FromStr for AnnotationFormat {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(AnnotationFormat::Csv),
            "coco_json" | "coco" => Ok(AnnotationFormat::CocoJson),
            other => Err(IngestError::UnknownFormat(other.to_string())),
        }
    }
}

impl AnnotationFormat {
    /// Guesses from the file extension: `.csv` or `.json`.
    pub fn from_path(path: &Path) -> Result<Self, IngestError> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Ok(AnnotationFormat::Csv),
            Some("json") => Ok(AnnotationFormat::CocoJson),
            other => Err(IngestError::UnknownFormat(other.unwrap_or("").to_string())),
        }
    }
}

/// A row or entry that failed validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    /// e.g. `line 4` or `annotation 17`.
    pub location: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoadedAnnotations {
    pub records: Vec<AnnotationRecord>,
    pub rejects: Vec<Reject>,
}

impl LoadedAnnotations {
    pub fn reject_fraction(&self) -> f64 {
        let total = self.records.len() + self.rejects.len();
        if total == 0 {
            0.0
        } else {
            self.rejects.len() as f64 / total as f64
        }
    }
}

pub fn load_annotations(path: &Path, format: AnnotationFormat) -> Result<LoadedAnnotations, IngestError> {
    let text = fs::read_to_string(path).map_err(|source| IngestError::Io { path: path.to_path_buf(), source })?;
    match format {
        AnnotationFormat::Csv => parse_csv(&text, path),
        AnnotationFormat::CocoJson => parse_coco(&text, path),
    }
}

const CSV_COLUMNS: [&str; 8] = ["image_id", "width", "height", "label", "x0", "y0", "x1", "y1"];

pub fn parse_csv(text: &str, path: &Path) -> Result<LoadedAnnotations, IngestError> {
    let malformed = |message: String| IngestError::Malformed { path: path.to_path_buf(), message };
    let mut reader =
        csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).flexible(true).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| malformed(format!("cannot read header: {e}")))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let mut idx = [0usize; 8];
    for (slot, name) in idx.iter_mut().zip(CSV_COLUMNS) {
        *slot = col(name).ok_or_else(|| malformed(format!("header lacks column {name:?}")))?;
    }
    let annotator_col = col("annotator");

    let mut out = LoadedAnnotations::default();
    let mut dims_seen: HashMap<String, ImageDims> = HashMap::new();
    for row in reader.records() {
        let row = row.map_err(|e| malformed(e.to_string()))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| row.get(i).unwrap_or("");
        let reject = |reason: String| Reject { location: format!("line {line}"), reason };
        match csv_record(&idx, annotator_col, &field) {
            Ok(rec) => {
                if let Some(prev) = dims_seen.get(&rec.image_id) {
                    if *prev != rec.dims {
                        out.rejects.push(reject(format!(
                            "dims {} disagree with earlier {} for image {}",
                            rec.dims, prev, rec.image_id
                        )));
                        continue;
                    }
                } else {
                    dims_seen.insert(rec.image_id.clone(), rec.dims);
                }
                out.records.push(rec);
            }
            Err(reason) => out.rejects.push(reject(reason)),
        }
    }
    Ok(out)
}

fn csv_record<'a>(
    idx: &[usize; 8],
    annotator_col: Option<usize>,
    field: &impl Fn(usize) -> &'a str,
) -> Result<AnnotationRecord, String> {
    let image_id = field(idx[0]).to_string();
    if image_id.is_empty() {
        return Err("empty image_id".into());
    }
    let dim = |i: usize, name: &str| {
        field(idx[i]).parse::<u32>().map_err(|_| format!("{name} {:?} is not a positive integer", field(idx[i])))
    };
    let dims = ImageDims::new(dim(1, "width")?, dim(2, "height")?).map_err(|e| e.to_string())?;
    let label = field(idx[3]).to_string();
    if label.is_empty() {
        return Err("empty label".into());
    }
    let raw: Vec<&str> = (4..8).map(|i| field(idx[i])).collect();
    let bbox = if raw.iter().all(|s| s.is_empty()) {
        None
    } else {
        let mut c = [0.0; 4];
        for (k, s) in raw.iter().enumerate() {
            c[k] = s
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("{} {:?} is not a number", CSV_COLUMNS[4 + k], s))?;
        }
        let b = PixelBox::from_coords(c);
        let v = validate_box(&b, dims);
        if !v.is_valid() {
            return Err(format!("invalid box: {v}"));
        }
        Some(b)
    };
    let annotator = annotator_col.map(|i| field(i).to_string()).filter(|a| !a.is_empty());
    Ok(AnnotationRecord { image_id, dims, label, bbox, annotator })
}

#[derive(Deserialize)]
struct CocoFile {
    images: Vec<CocoImage>,
    #[serde(default)]
    annotations: Vec<CocoAnnotation>,
    categories: Vec<CocoCategory>,
}

#[derive(Deserialize)]
struct CocoImage {
    id: serde_json::Value,
    width: Option<u32>,
    height: Option<u32>,
}

#[derive(Deserialize)]
struct CocoAnnotation {
    id: Option<serde_json::Value>,
    image_id: serde_json::Value,
    category_id: serde_json::Value,
    bbox: Option<Vec<f64>>,
    #[serde(default)]
    annotator: Option<serde_json::Value>,
}

#[derive(Deserialize)]
struct CocoCategory {
    id: serde_json::Value,
    name: String,
}

fn id_string(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn parse_coco(text: &str, path: &Path) -> Result<LoadedAnnotations, IngestError> {
    let file: CocoFile = serde_json::from_str(text)
        .map_err(|e| IngestError::Malformed { path: path.to_path_buf(), message: e.to_string() })?;
    let mut images = HashMap::new();
    for img in &file.images {
        let id = id_string(&img.id);
        let (Some(w), Some(h)) = (img.width, img.height) else {
            return Err(IngestError::MissingDims(id));
        };
        let dims = ImageDims::new(w, h).map_err(|_| IngestError::MissingDims(id.clone()))?;
        images.insert(id, dims);
    }
    let categories: HashMap<String, &str> =
        file.categories.iter().map(|c| (id_string(&c.id), c.name.as_str())).collect();

    let mut out = LoadedAnnotations::default();
    for (pos, ann) in file.annotations.iter().enumerate() {
        let location = match &ann.id {
            Some(id) => format!("annotation {}", id_string(id)),
            None => format!("annotation #{pos}"),
        };
        let reject = |reason: String| Reject { location: location.clone(), reason };
        let image_id = id_string(&ann.image_id);
        let Some(&dims) = images.get(&image_id) else {
            out.rejects.push(reject(format!("unknown image {image_id}")));
            continue;
        };
        let Some(&label) = categories.get(&id_string(&ann.category_id)) else {
            out.rejects.push(reject(format!("unknown category {}", ann.category_id)));
            continue;
        };
        let bbox = match ann.bbox.as_deref() {
            None | Some([]) => None,
            Some(&[x, y, w, h]) => {
                let b = PixelBox::from_xywh(x, y, w, h);
                let v = validate_box(&b, dims);
                if !v.is_valid() {
                    out.rejects.push(reject(format!("invalid box: {v}")));
                    continue;
                }
                Some(b)
            }
            Some(other) => {
                out.rejects.push(reject(format!("bbox has {} values, expected 4", other.len())));
                continue;
            }
        };
        out.records.push(AnnotationRecord {
            image_id,
            dims,
            label: label.to_string(),
            bbox,
            annotator: ann.annotator.as_ref().map(id_string),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    #[default]
    InDomain,
    Known,
    Unknown,
}

/// One `(image, abnormality)` pair with its prompt and target boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSample")]
pub struct GroundingSample {
    pub image_id: String,
    pub dims: ImageDims,
    pub label: String,
    pub prompt: String,
    pub gt_boxes: Vec<PixelBox>,
    pub gt_quads: Vec<TokenQuad>,
    pub split: Option<Split>,
    pub partition: Partition,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSample {
    image_id: String,
    dims: ImageDims,
    label: String,
    prompt: String,
    gt_boxes: Vec<PixelBox>,
    gt_quads: Vec<TokenQuad>,
    #[serde(default)]
    split: Option<Split>,
    #[serde(default)]
    partition: Partition,
}

impl TryFrom<RawSample> for GroundingSample {
    type Error = IngestError;

    fn try_from(r: RawSample) -> Result<Self, Self::Error> {
        let s = GroundingSample {
            image_id: r.image_id,
            dims: r.dims,
            label: r.label,
            prompt: r.prompt,
            gt_boxes: r.gt_boxes,
            gt_quads: r.gt_quads,
            split: r.split,
            partition: r.partition,
        };
        s.check()?;
        Ok(s)
    }
}

impl GroundingSample {
    /// Builds a sample, encoding `boxes` with `quantizer`.
    pub fn new(
        image_id: impl Into<String>,
        dims: ImageDims,
        label: impl Into<String>,
        prompt: impl Into<String>,
        boxes: Vec<PixelBox>,
        quantizer: &Quantizer,
    ) -> Result<Self, IngestError> {
        let gt_quads = boxes.iter().map(|b| quantizer.encode_box(b, dims)).collect::<Result<Vec<_>, _>>()?;
        let s = GroundingSample {
            image_id: image_id.into(),
            dims,
            label: label.into(),
            prompt: prompt.into(),
            gt_boxes: boxes,
            gt_quads,
            split: None,
            partition: Partition::InDomain,
        };
        s.check()?;
        Ok(s)
    }

    fn check(&self) -> Result<(), IngestError> {
        let bad = |message: &str| IngestError::InvalidSample {
            image_id: self.image_id.clone(),
            label: self.label.clone(),
            message: message.to_string(),
        };
        if self.gt_boxes.is_empty() {
            return Err(bad("no ground-truth boxes"));
        }
        if self.gt_boxes.len() != self.gt_quads.len() {
            return Err(bad("box and quad counts differ"));
        }
        for b in &self.gt_boxes {
            let v = validate_box(b, self.dims);
            if !v.is_valid() {
                return Err(IngestError::InvalidBox { image_id: self.image_id.clone(), validity: v });
            }
        }
        Ok(())
    }
}

/// Settings for [`build_pairs`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PairConfig {
    pub fusion: FusionConfig,
    pub mode: PromptMode,
    pub templates: GroundingTemplates,
    pub quantizer: Quantizer,
    /// Labels that mark an image as normal; compared case-insensitively.
    pub no_finding_labels: Vec<String>,
}

impl Default for PairConfig {
    fn default() -> Self {
        Self {
            fusion: FusionConfig::default(),
            mode: PromptMode::LabelOnly,
            templates: GroundingTemplates::default(),
            quantizer: Quantizer::default(),
            no_finding_labels: vec!["No finding".to_string()],
        }
    }
}

/// Fuses, encodes and prompts every `(image, label)` that has at least one box.
///
/// Output is sorted by `(image_id, label)`; per-image fusion runs on the
/// current rayon pool.
pub fn build_pairs(
    records: &[AnnotationRecord],
    cfg: &PairConfig,
    descriptions: Option<&DescriptionTable>,
) -> Result<Vec<GroundingSample>, IngestError> {
    cfg.templates.validate()?;
    let no_finding: BTreeSet<String> = cfg.no_finding_labels.iter().map(|l| l.trim().to_lowercase()).collect();
    let kept: Vec<&AnnotationRecord> =
        records.iter().filter(|r| r.bbox.is_some() && !no_finding.contains(&r.label.trim().to_lowercase())).collect();

    if cfg.mode == PromptMode::Knowledge {
        let missing: BTreeSet<&str> =
            kept.iter().map(|r| r.label.as_str()).filter(|l| descriptions.and_then(|d| d.get(l)).is_none()).collect();
        if !missing.is_empty() {
            return Err(IngestError::MissingDescriptions(missing.into_iter().map(str::to_string).collect()));
        }
    }

    let mut by_image: BTreeMap<&str, ImageAnnotations> = BTreeMap::new();
    for r in kept {
        let entry = by_image.entry(r.image_id.as_str()).or_insert_with(|| ImageAnnotations {
            image_id: r.image_id.clone(),
            dims: r.dims,
            boxes: Vec::new(),
        });
        if entry.dims != r.dims {
            return Err(IngestError::InvalidSample {
                image_id: r.image_id.clone(),
                label: r.label.clone(),
                message: format!("dims {} disagree with {}", r.dims, entry.dims),
            });
        }
        let bbox = r.bbox.expect("filtered above");
        entry.boxes.push(ScoredBox::annotation(bbox, r.label.clone(), r.annotator.clone()));
    }
    let images: Vec<ImageAnnotations> = by_image.into_values().collect();
    let fused = fuse_annotations(&images, &cfg.fusion)?;

    let mut samples = Vec::new();
    for img in fused {
        let mut by_label: BTreeMap<&str, Vec<PixelBox>> = BTreeMap::new();
        for b in &img.boxes {
            by_label.entry(b.label.as_str()).or_default().push(b.bbox);
        }
        for (label, boxes) in by_label {
            let desc = descriptions.and_then(|d| d.get(label));
            let prompt = cfg.templates.render(label, desc, cfg.mode)?;
            samples.push(GroundingSample::new(img.image_id.clone(), img.dims, label, prompt, boxes, &cfg.quantizer)?);
        }
    }
    samples.sort_by(|a, b| (&a.image_id, &a.label).cmp(&(&b.image_id, &b.label)));
    Ok(samples)
}

#[derive(Debug, Clone, PartialEq)]
pub enum SplitSpec {
    /// Fraction of images assigned to train, shuffled with a seeded RNG.
    Ratio { train_fraction: f64, seed: u64 },
    /// Explicit image id lists. Images in neither list are left unassigned.
    Explicit { train: Vec<String>, test: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SplitOutcome {
    pub train: Vec<GroundingSample>,
    pub test: Vec<GroundingSample>,
    pub unassigned_images: Vec<String>,
}

impl SplitOutcome {
    pub fn image_ids(samples: &[GroundingSample]) -> BTreeSet<String> {
        samples.iter().map(|s| s.image_id.clone()).collect()
    }
}

/// Splits by image so an image never contributes to both sides.
pub fn split_samples(samples: &[GroundingSample], spec: &SplitSpec) -> Result<SplitOutcome, IngestError> {
    let images: BTreeSet<&str> = samples.iter().map(|s| s.image_id.as_str()).collect();
    let mut side: HashMap<&str, Split> = HashMap::new();
    match spec {
        SplitSpec::Ratio { train_fraction, seed } => {
            if !(0.0..=1.0).contains(train_fraction) {
                return Err(IngestError::BadRatio(*train_fraction));
            }
            let mut order: Vec<&str> = images.iter().copied().collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(*seed));
            let n_train = (train_fraction * order.len() as f64).round() as usize;
            for (i, id) in order.into_iter().enumerate() {
                side.insert(id, if i < n_train { Split::Train } else { Split::Test });
            }
        }
        SplitSpec::Explicit { train, test } => {
            let unknown: BTreeSet<&String> =
                train.iter().chain(test).filter(|id| !images.contains(id.as_str())).collect();
            if !unknown.is_empty() {
                return Err(IngestError::UnknownImages(unknown.into_iter().cloned().collect()));
            }
            let train_set: BTreeSet<&String> = train.iter().collect();
            let both: BTreeSet<&String> = test.iter().filter(|id| train_set.contains(id)).collect();
            if !both.is_empty() {
                return Err(IngestError::OverlappingSplit(both.into_iter().cloned().collect()));
            }
            for id in train {
                side.insert(id.as_str(), Split::Train);
            }
            for id in test {
                side.insert(id.as_str(), Split::Test);
            }
        }
    }
    let mut out = SplitOutcome::default();
    for s in samples {
        match side.get(s.image_id.as_str()) {
            Some(&split) => {
                let mut s = s.clone();
                s.split = Some(split);
                match split {
                    Split::Train => out.train.push(s),
                    Split::Test => out.test.push(s),
                }
            }
            None => {
                if out.unassigned_images.last() != Some(&s.image_id) {
                    out.unassigned_images.push(s.image_id.clone());
                }
            }
        }
    }
    out.unassigned_images.sort();
    out.unassigned_images.dedup();
    Ok(out)
}

/// Case-insensitive label aliases, `alias → canonical`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AliasMap(BTreeMap<String, String>);

impl AliasMap {
    pub fn new<K: Into<String>, V: Into<String>>(pairs: impl IntoIterator<Item = (K, V)>) -> Self {
        Self(pairs.into_iter().map(|(k, v)| (k.into(), v.into())).collect())
    }

    /// Folded canonical form of `label`.
    pub fn canonical(&self, label: &str) -> String {
        let folded = label.trim().to_lowercase();
        self.0
            .iter()
            .find(|(alias, _)| alias.trim().to_lowercase() == folded)
            .map(|(_, canon)| canon.trim().to_lowercase())
            .unwrap_or(folded)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ZeroShotPartition {
    pub known: Vec<GroundingSample>,
    pub unknown: Vec<GroundingSample>,
}

/// Splits samples into classes seen in training (`known`) and the rest.
pub fn partition_zero_shot(
    samples: &[GroundingSample],
    known_classes: &[String],
    aliases: &AliasMap,
) -> Result<ZeroShotPartition, IngestError> {
    if known_classes.is_empty() {
        return Err(IngestError::NoKnownClasses);
    }
    let known: BTreeSet<String> = known_classes.iter().map(|c| aliases.canonical(c)).collect();
    let mut out = ZeroShotPartition::default();
    for s in samples {
        let mut s = s.clone();
        if known.contains(&aliases.canonical(&s.label)) {
            s.partition = Partition::Known;
            out.known.push(s);
        } else {
            s.partition = Partition::Unknown;
            out.unknown.push(s);
        }
    }
    Ok(out)
}

/// Writes one JSON object per line.
pub fn write_samples<W: Write>(mut w: W, samples: &[GroundingSample]) -> std::io::Result<()> {
    for s in samples {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_samples(path: &Path) -> Result<Vec<GroundingSample>, IngestError> {
    let io = |source| IngestError::Io { path: path.to_path_buf(), source };
    let f = fs::File::open(path).map_err(io)?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let s = serde_json::from_str(&line).map_err(|e| IngestError::Malformed {
            path: path.to_path_buf(),
            message: format!("line {}: {e}", n + 1),
        })?;
        out.push(s);
    }
    Ok(out)
}
