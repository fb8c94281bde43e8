use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use groundkit_core::dataset_ingest::{
    build_pairs, load_annotations, partition_zero_shot, split_samples, write_samples, AnnotationFormat,
    GroundingSample, PairConfig, Reject, SplitOutcome, SplitSpec,
};
use groundkit_core::knowledge_prompts::{DescriptionTable, PromptMode};
use serde::Serialize;

use crate::config::ToolConfig;
use crate::error::{read_text, write_text, CliError, CliResult};

#[derive(Args, Debug)]
pub struct BuildArgs {
    /// Annotation file (CSV or COCO JSON).
    #[arg(long)]
    annotations: PathBuf,
    /// csv | coco_json [default: from the file extension]
    #[arg(long)]
    format: Option<AnnotationFormat>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// label_only | knowledge [default: label_only]
    #[arg(long)]
    mode: Option<PromptMode>,
    /// Descriptions file for knowledge mode [default: bundled table].
    #[arg(long)]
    descriptions: Option<PathBuf>,
    /// Box fusion IoU threshold [default: 0.55].
    #[arg(long = "iou-thr")]
    iou_thr: Option<f64>,
    /// Split seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Fraction of images in train [default: 0.9].
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Comma-separated classes seen in training; enables the known/unknown
    /// partition [default: none].
    #[arg(long, value_delimiter = ',')]
    known_classes: Option<Vec<String>>,
    /// Abort when rejected rows exceed this fraction [default: 0.05].
    #[arg(long)]
    max_reject_fraction: Option<f64>,
}

impl BuildArgs {
    fn apply(&self, cfg: &mut ToolConfig) {
        if let Some(m) = self.mode {
            cfg.prompts.mode = m;
        }
        if let Some(d) = &self.descriptions {
            cfg.prompts.descriptions = Some(d.clone());
        }
        if let Some(t) = self.iou_thr {
            cfg.fusion.iou_threshold = t;
        }
        if let Some(s) = self.seed {
            cfg.dataset.seed = s;
        }
        if let Some(f) = self.train_fraction {
            cfg.dataset.train_fraction = f;
        }
        if let Some(k) = &self.known_classes {
            cfg.dataset.known_classes = k.iter().map(|c| c.trim().to_string()).filter(|c| !c.is_empty()).collect();
        }
        if let Some(r) = self.max_reject_fraction {
            cfg.dataset.max_reject_fraction = r;
        }
    }
}

#[derive(Serialize)]
struct Counts {
    records: usize,
    rejects: usize,
    samples: usize,
    images: usize,
    train_samples: usize,
    test_samples: usize,
    train_images: usize,
    test_images: usize,
    unassigned_images: usize,
    known_samples: Option<usize>,
    unknown_samples: Option<usize>,
    per_label: BTreeMap<String, usize>,
}

#[derive(Serialize)]
struct BuildReport<'a> {
    annotations: String,
    config_fingerprint: String,
    fusion_iou_threshold: f64,
    prompt_mode: PromptMode,
    counts: Counts,
    rejects: &'a [Reject],
    config: &'a ToolConfig,
}

fn read_list(path: &Path) -> CliResult<Vec<String>> {
    Ok(read_text(path)?.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

fn manifest(samples: &[GroundingSample]) -> String {
    SplitOutcome::image_ids(samples).into_iter().map(|id| id + "\n").collect()
}

pub fn run(args: BuildArgs, mut cfg: ToolConfig) -> CliResult<()> {
    args.apply(&mut cfg);
    if !(0.0..=1.0).contains(&cfg.dataset.max_reject_fraction) {
        return Err(CliError::io_msg("max_reject_fraction must be in [0, 1]"));
    }
    let format = match args.format {
        Some(f) => f,
        None => AnnotationFormat::from_path(&args.annotations)?,
    };
    let loaded = load_annotations(&args.annotations, format)?;
    for r in &loaded.rejects {
        eprintln!("warning: rejected {}: {}", r.location, r.reason);
    }
    if loaded.reject_fraction() > cfg.dataset.max_reject_fraction {
        return Err(CliError::invalid_msg(format!(
            "{} of {} rows rejected ({:.1}%), above the limit of {:.1}%",
            loaded.rejects.len(),
            loaded.rejects.len() + loaded.records.len(),
            100.0 * loaded.reject_fraction(),
            100.0 * cfg.dataset.max_reject_fraction
        )));
    }

    let descriptions = match cfg.prompts.mode {
        PromptMode::LabelOnly => None,
        PromptMode::Knowledge => Some(match &cfg.prompts.descriptions {
            Some(p) => DescriptionTable::load(p)?,
            None => DescriptionTable::builtin(),
        }),
    };
    let pair_cfg = PairConfig {
        fusion: cfg.fusion,
        mode: cfg.prompts.mode,
        templates: cfg.prompts.templates.clone(),
        quantizer: cfg.codec.quantizer()?,
        no_finding_labels: cfg.dataset.no_finding_labels.clone(),
    };
    let samples = build_pairs(&loaded.records, &pair_cfg, descriptions.as_ref())?;

    let spec = match (&cfg.dataset.train_list, &cfg.dataset.test_list) {
        (None, None) => SplitSpec::Ratio { train_fraction: cfg.dataset.train_fraction, seed: cfg.dataset.seed },
        (train, test) => SplitSpec::Explicit {
            train: train.as_deref().map(read_list).transpose()?.unwrap_or_default(),
            test: test.as_deref().map(read_list).transpose()?.unwrap_or_default(),
        },
    };
    let split = split_samples(&samples, &spec)?;
    let mut all: Vec<GroundingSample> = split.train.iter().chain(&split.test).cloned().collect();
    let (mut known, mut unknown) = (None, None);
    if !cfg.dataset.known_classes.is_empty() {
        let p = partition_zero_shot(&all, &cfg.dataset.known_classes, &cfg.dataset.aliases)?;
        known = Some(p.known.len());
        unknown = Some(p.unknown.len());
        all = p.known.into_iter().chain(p.unknown).collect();
    }
    all.sort_by(|a, b| (&a.image_id, &a.label).cmp(&(&b.image_id, &b.label)));

    let mut per_label = BTreeMap::new();
    for s in &all {
        *per_label.entry(s.label.clone()).or_insert(0) += 1;
    }
    let fingerprint = cfg.fingerprint();
    let report = BuildReport {
        annotations: args.annotations.display().to_string(),
        config_fingerprint: fingerprint,
        fusion_iou_threshold: cfg.fusion.iou_threshold,
        prompt_mode: cfg.prompts.mode,
        counts: Counts {
            records: loaded.records.len(),
            rejects: loaded.rejects.len(),
            samples: all.len(),
            images: SplitOutcome::image_ids(&all).len(),
            train_samples: split.train.len(),
            test_samples: split.test.len(),
            train_images: SplitOutcome::image_ids(&split.train).len(),
            test_images: SplitOutcome::image_ids(&split.test).len(),
            unassigned_images: split.unassigned_images.len(),
            known_samples: known,
            unknown_samples: unknown,
            per_label,
        },
        rejects: &loaded.rejects,
        config: &cfg,
    };

    let mut jsonl = Vec::new();
    write_samples(&mut jsonl, &all).map_err(CliError::io)?;
    let out = &args.out;
    write_text(&out.join("samples.jsonl"), &String::from_utf8(jsonl).expect("json is utf-8"))?;
    write_text(&out.join("train.txt"), &manifest(&split.train))?;
    write_text(&out.join("test.txt"), &manifest(&split.test))?;
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    write_text(&out.join("build_report.json"), &text)?;
    write_text(&out.join("build_report.meta.json"), &crate::report::meta_sidecar())?;
    let u = |n: Option<usize>| n.map_or("-".to_string(), |n| n.to_string());
    eprintln!(
        "built {} samples from {} images (train {}, test {}, known {}, unknown {})",
        report.counts.samples,
        report.counts.images,
        report.counts.train_samples,
        report.counts.test_samples,
        u(known),
        u(unknown),
    );
    Ok(())
}
