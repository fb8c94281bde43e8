use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use groundkit_core::dataset_ingest::{read_samples, GroundingSample};
use groundkit_core::geometry::{ImageDims, PixelBox};
use groundkit_core::metrics_map::{map_suite, Detection, GroundTruth, Interpolation};
use groundkit_core::metrics_rodeo::{rodeo, rodeo_per_class, Aggregation};
use groundkit_core::report::{comparison_table, write_archive, EvalRun, TableFormat};
use groundkit_core::token_codec::{LocToken, Quantizer};
use serde_json::Value;

use crate::config::ToolConfig;
use crate::error::{read_text, write_text, CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Which {
    Map,
    Rodeo,
    All,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Predictions JSONL, or a samples file for self-evaluation.
    #[arg(long)]
    predictions: PathBuf,
    /// Ground-truth samples JSONL written by `build`.
    #[arg(long)]
    ground_truth: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    metrics: Which,
    /// cont | 101pt [default: 101pt]
    #[arg(long)]
    interp: Option<Interpolation>,
    /// RoDeO localization scale [default: 1.0].
    #[arg(long)]
    sigma: Option<f64>,
    /// RoDeO matching drops pairs with GIoU at or below this [default: 0].
    #[arg(long)]
    affinity_floor: Option<f64>,
    /// RoDeO aggregation: micro pools all images, macro averages per image
    /// [default: micro].
    #[arg(long, value_parser = parse_aggregation)]
    aggregation: Option<Aggregation>,
    /// Write the run archive (JSON) here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "run")]
    run_id: String,
    #[arg(long, default_value = "groundkit")]
    method: String,
    /// Parameter count shown in tables, e.g. 0.23B.
    #[arg(long)]
    params: Option<String>,
    /// Training sample count shown in tables.
    #[arg(long)]
    train_samples: Option<u64>,
}

/// Ground truth plus the image sizes needed to decode token predictions.
pub struct Truth {
    pub gts: Vec<GroundTruth>,
    pub dims: HashMap<String, ImageDims>,
}

pub fn truth_from_samples(samples: &[GroundingSample]) -> Truth {
    let mut gts = Vec::new();
    let mut dims = HashMap::new();
    for s in samples {
        dims.insert(s.image_id.clone(), s.dims);
        for b in &s.gt_boxes {
            gts.push(GroundTruth { image_id: s.image_id.clone(), label: s.label.clone(), bbox: *b });
        }
    }
    Truth { gts, dims }
}

fn coord(v: &Value, name: &str, extent: Option<u32>, q: &Quantizer) -> Result<f64, String> {
    match v {
        Value::Number(n) => n.as_f64().ok_or_else(|| format!("{name} is not a finite number")),
        Value::String(s) => {
            let s = s.trim();
            if !s.starts_with("<loc_") {
                return Err(format!("{name}: {s:?} is not a location token"));
            }
            let bin = LocToken::parse_surface(s).map_err(|e| format!("{name}: {e}"))?;
            let tok = LocToken::new(u32::try_from(bin).map_err(|_| format!("{name}: bin {bin} out of range"))?);
            let extent = extent.ok_or_else(|| format!("{name} is a token but the image is not in the ground truth"))?;
            q.decode_coord(tok, extent).map_err(|e| e.to_string())
        }
        _ => Err(format!("{name} must be a number or a location token")),
    }
}

/// One detection per line: `image_id`, `label`, optional `confidence`
/// (default 1.0) and `x0 y0 x1 y1`, each a pixel number or `<loc_K>` token.
/// Lines holding a samples record (`gt_boxes`) yield one detection per box.
pub fn parse_predictions(text: &str, truth: &Truth, q: &Quantizer) -> CliResult<Vec<Detection>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |m: String| CliError::invalid_msg(format!("predictions line {}: {m}", n + 1));
        let v: Value = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        if v.get("gt_boxes").is_some() {
            let s: GroundingSample = serde_json::from_value(v).map_err(|e| bad(e.to_string()))?;
            out.extend(s.gt_boxes.iter().map(|b| Detection {
                image_id: s.image_id.clone(),
                label: s.label.clone(),
                bbox: *b,
                confidence: 1.0,
            }));
            continue;
        }
        let field =
            |k: &str| v.get(k).and_then(Value::as_str).map(String::from).ok_or_else(|| bad(format!("missing {k}")));
        let image_id = field("image_id")?;
        let label = field("label")?;
        let confidence = match v.get("confidence") {
            None | Some(Value::Null) => 1.0,
            Some(c) => c.as_f64().ok_or_else(|| bad("confidence must be a number".into()))?,
        };
        let (w, h) = match truth.dims.get(&image_id) {
            Some(d) => (Some(d.width()), Some(d.height())),
            None => (None, None),
        };
        let mut c = [0.0; 4];
        for (k, (name, extent)) in [("x0", w), ("y0", h), ("x1", w), ("y1", h)].into_iter().enumerate() {
            let raw = v.get(name).ok_or_else(|| bad(format!("missing {name}")))?;
            c[k] = coord(raw, name, extent, q).map_err(bad)?;
        }
        out.push(Detection { image_id, label, bbox: PixelBox::from_coords(c), confidence });
    }
    Ok(out)
}

fn check_vocabulary(dets: &[Detection], gts: &[GroundTruth]) -> CliResult<()> {
    let p: BTreeSet<&str> = dets.iter().map(|d| d.label.as_str()).collect();
    let g: BTreeSet<&str> = gts.iter().map(|d| d.label.as_str()).collect();
    if p.is_empty() {
        return Ok(());
    }
    let only_pred: Vec<&str> = p.difference(&g).copied().collect();
    let only_gt: Vec<&str> = g.difference(&p).copied().collect();
    if p.is_disjoint(&g) {
        return Err(CliError::invalid_msg(format!(
            "prediction and ground-truth labels do not overlap; only in predictions: [{}]; only in ground truth: [{}]",
            only_pred.join(", "),
            only_gt.join(", ")
        )));
    }
    if !only_pred.is_empty() {
        eprintln!("warning: labels absent from ground truth are ignored: [{}]", only_pred.join(", "));
    }
    Ok(())
}

pub fn evaluate(args: &EvalArgs, cfg: &ToolConfig) -> CliResult<EvalRun> {
    let samples = read_samples(&args.ground_truth)?;
    let truth = truth_from_samples(&samples);
    if truth.gts.is_empty() {
        return Err(CliError::invalid_msg("ground truth is empty, nothing to evaluate"));
    }
    let q = cfg.codec.quantizer()?;
    let dets = parse_predictions(&read_text(&args.predictions)?, &truth, &q)?;
    check_vocabulary(&dets, &truth.gts)?;

    let m = &cfg.metrics;
    let mut metadata = BTreeMap::new();
    let mut run = EvalRun {
        run_id: args.run_id.clone(),
        method_name: args.method.clone(),
        params_count: args.params.clone(),
        train_samples: args.train_samples,
        ap: None,
        rodeo: None,
        per_class: BTreeMap::new(),
        config_fingerprint: cfg.fingerprint(),
        metadata: BTreeMap::new(),
    };
    if matches!(args.metrics, Which::Map | Which::All) {
        run.ap = Some(map_suite(&dets, &truth.gts, m.interpolation)?);
        metadata.insert("map.interpolation".to_string(), m.interpolation.to_string());
        metadata.insert(
            "map.classes".to_string(),
            "mean over classes present in ground truth; others excluded".to_string(),
        );
        metadata
            .insert("map.ties".to_string(), "confidence descending, then box x0,y0,x1,y1, then image id".to_string());
    }
    if matches!(args.metrics, Which::Rodeo | Which::All) {
        let r = &m.rodeo;
        run.rodeo = Some(rodeo(&dets, &truth.gts, r)?);
        let pc = rodeo_per_class(&dets, &truth.gts, r)?;
        run.per_class = pc.scores;
        let agg = match r.aggregation {
            Aggregation::Micro => "micro",
            Aggregation::Macro => "macro",
        };
        metadata.insert("rodeo.aggregation".to_string(), agg.to_string());
        metadata.insert("rodeo.sigma".to_string(), r.sigma.to_string());
        metadata.insert("rodeo.affinity_floor".to_string(), r.affinity_floor.to_string());
        metadata.insert("rodeo.per_class".to_string(), "single-class scoring: r_cls is the matching rate".to_string());
        if !pc.skipped.is_empty() {
            metadata.insert("rodeo.skipped_labels".to_string(), pc.skipped.join(", "));
        }
    }
    run.metadata = metadata;
    Ok(run)
}

fn parse_aggregation(s: &str) -> Result<Aggregation, String> {
    match s {
        "micro" => Ok(Aggregation::Micro),
        "macro" => Ok(Aggregation::Macro),
        other => Err(format!("unknown aggregation {other:?} (micro|macro)")),
    }
}

pub fn run(args: EvalArgs, mut cfg: ToolConfig) -> CliResult<()> {
    if let Some(i) = args.interp {
        cfg.metrics.interpolation = i;
    }
    if let Some(s) = args.sigma {
        cfg.metrics.rodeo.sigma = s;
    }
    if let Some(f) = args.affinity_floor {
        cfg.metrics.rodeo.affinity_floor = f;
    }
    if let Some(a) = args.aggregation {
        cfg.metrics.rodeo.aggregation = a;
    }
    let run = evaluate(&args, &cfg)?;
    if let Some(out) = &args.out {
        write_text(out, &write_archive(std::slice::from_ref(&run)))?;
    }
    print!("{}", comparison_table(std::slice::from_ref(&run), TableFormat::Markdown));
    Ok(())
}
