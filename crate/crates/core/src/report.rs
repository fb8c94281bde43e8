//! Rendering of evaluation runs: comparison tables, per-class chart data,
//! rank comparisons and a JSON run archive.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::metrics_map::APResult;
use crate::metrics_rodeo::RodeoScores;

pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRun {
    pub run_id: String,
    pub method_name: String,
    #[serde(default)]
    pub params_count: Option<String>,
    #[serde(default)]
    pub train_samples: Option<u64>,
    #[serde(default)]
    pub ap: Option<APResult>,
    #[serde(default)]
    pub rodeo: Option<RodeoScores>,
    #[serde(default)]
    pub per_class: BTreeMap<String, RodeoScores>,
    pub config_fingerprint: String,
    /// Metric choices and caveats carried alongside the numbers.
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

/// SHA-256 over the canonical (key-sorted, compact) JSON form of `value`.
pub fn fingerprint<T: Serialize>(value: &T) -> String {
    let canonical = serde_json::to_value(value).expect("serializable config");
    let bytes = serde_json::to_vec(&canonical).expect("serializable config");
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Markdown,
    Csv,
    Json,
}

impl std::str::FromStr for TableFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "markdown" | "md" => Ok(Self::Markdown),
            "csv" => Ok(Self::Csv),
            "json" | "structured" => Ok(Self::Json),
            other => Err(format!("unknown table format `{other}` (expected markdown, csv or json)")),
        }
    }
}

pub const METRIC_COLUMNS: [&str; 7] = ["mAP50:95", "mAP50", "mAP75", "R_loc", "R_shape", "R_cls", "R_total"];

/// Column values on the percentage scale, in [`METRIC_COLUMNS`] order.
pub fn metric_values(run: &EvalRun) -> [Option<f64>; 7] {
    let ap = run.ap.as_ref();
    let r = run.rodeo.as_ref();
    [
        ap.map(|a| 100.0 * a.map50_95),
        ap.map(|a| 100.0 * a.map50),
        ap.map(|a| 100.0 * a.map75),
        r.map(|s| s.r_loc),
        r.map(|s| s.r_shape),
        r.map(|s| s.r_cls),
        r.map(|s| s.r_total),
    ]
}

/// Rounds to two decimals, halves away from zero.
pub fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

pub fn fmt2(v: f64) -> String {
    format!("{:.2}", round2(v))
}

/// `16087` → `16,087`.
pub fn thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rank {
    Best,
    Second,
}

/// Best and second-best per column, compared after rounding so ties are
/// exactly what the reader sees. Second-best is the next distinct value.
pub fn column_flags(runs: &[EvalRun]) -> Vec<[Option<Rank>; 7]> {
    let values: Vec<[Option<f64>; 7]> =
        runs.iter().map(|r| metric_values(r).map(|v| v.filter(|x| x.is_finite()).map(round2))).collect();
    let mut flags = vec![[None; 7]; runs.len()];
    for col in 0..7 {
        let mut distinct: Vec<f64> = values.iter().filter_map(|v| v[col]).collect();
        distinct.sort_by(|a, b| b.total_cmp(a));
        distinct.dedup();
        for (row, v) in values.iter().enumerate() {
            if let Some(x) = v[col] {
                if Some(&x) == distinct.first() {
                    flags[row][col] = Some(Rank::Best);
                } else if Some(&x) == distinct.get(1) {
                    flags[row][col] = Some(Rank::Second);
                }
            }
        }
    }
    flags
}

fn descriptor_cells(run: &EvalRun) -> [String; 3] {
    [
        run.method_name.clone(),
        run.params_count.clone().unwrap_or_else(|| "-".into()),
        run.train_samples.map(thousands).unwrap_or_else(|| "-".into()),
    ]
}

const DESCRIPTOR_COLUMNS: [&str; 3] = ["Method", "Params", "Train. Samp."];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub run_id: String,
    pub method: String,
    pub params: Option<String>,
    pub train_samples: Option<u64>,
    pub values: Vec<Option<f64>>,
    pub display: Vec<String>,
    pub flags: Vec<Option<Rank>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
}

pub fn comparison_rows(runs: &[EvalRun]) -> ComparisonTable {
    let flags = column_flags(runs);
    let rows = runs
        .iter()
        .zip(flags)
        .map(|(run, f)| {
            let values = metric_values(run);
            TableRow {
                run_id: run.run_id.clone(),
                method: run.method_name.clone(),
                params: run.params_count.clone(),
                train_samples: run.train_samples,
                values: values.to_vec(),
                display: values.iter().map(|v| v.map(fmt2).unwrap_or_else(|| "-".into())).collect(),
                flags: f.to_vec(),
            }
        })
        .collect();
    ComparisonTable { columns: METRIC_COLUMNS.iter().map(|s| s.to_string()).collect(), rows }
}

/// Renders one row per run. Markdown marks best as `**v**` and second as
/// `_v_`; CSV appends `*` and `+`; JSON carries raw values and flags.
pub fn comparison_table(runs: &[EvalRun], format: TableFormat) -> String {
    let table = comparison_rows(runs);
    match format {
        TableFormat::Markdown => render_markdown(runs, &table),
        TableFormat::Csv => render_csv(runs, &table),
        TableFormat::Json => {
            let mut s = serde_json::to_string_pretty(&table).expect("table serializes");
            s.push('\n');
            s
        }
    }
}

fn render_markdown(runs: &[EvalRun], table: &ComparisonTable) -> String {
    let mut out = String::new();
    let header: Vec<&str> = DESCRIPTOR_COLUMNS.iter().chain(METRIC_COLUMNS.iter()).copied().collect();
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let rule: Vec<&str> =
        header.iter().enumerate().map(|(i, _)| if i < DESCRIPTOR_COLUMNS.len() { ":---" } else { "---:" }).collect();
    let _ = writeln!(out, "|{}|", rule.join("|"));
    for (run, row) in runs.iter().zip(&table.rows) {
        let mut cells: Vec<String> = descriptor_cells(run).to_vec();
        for (text, flag) in row.display.iter().zip(&row.flags) {
            cells.push(match flag {
                Some(Rank::Best) => format!("**{text}**"),
                Some(Rank::Second) => format!("_{text}_"),
                None => text.clone(),
            });
        }
        let _ = writeln!(out, "| {} |", cells.join(" | "));
    }
    out
}

fn render_csv(runs: &[EvalRun], table: &ComparisonTable) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<&str> = DESCRIPTOR_COLUMNS.iter().chain(METRIC_COLUMNS.iter()).copied().collect();
    w.write_record(&header).expect("in-memory write");
    for (run, row) in runs.iter().zip(&table.rows) {
        let mut cells: Vec<String> = descriptor_cells(run).to_vec();
        for (text, flag) in row.display.iter().zip(&row.flags) {
            cells.push(match flag {
                Some(Rank::Best) => format!("{text}*"),
                Some(Rank::Second) => format!("{text}+"),
                None => text.clone(),
            });
        }
        w.write_record(&cells).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartEntry {
    pub class: String,
    pub r_total: f64,
    /// Competition rank: equal scores share a rank, the next rank skips.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartData {
    pub run_id: String,
    pub method: String,
    pub metric: String,
    pub entries: Vec<ChartEntry>,
}

/// Per-class `r_total`, highest first; ties ordered by class name.
pub fn per_class_chart_data(run: &EvalRun) -> ChartData {
    let mut pairs: Vec<(&String, f64)> = run.per_class.iter().map(|(c, s)| (c, s.r_total)).collect();
    pairs.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut entries = Vec::with_capacity(pairs.len());
    for (i, (class, score)) in pairs.iter().enumerate() {
        let rank = match entries.last() {
            Some(ChartEntry { r_total, rank, .. }) if *r_total == *score => *rank,
            _ => i + 1,
        };
        entries.push(ChartEntry { class: class.to_string(), r_total: *score, rank });
    }
    ChartData { run_id: run.run_id.clone(), method: run.method_name.clone(), metric: "r_total".into(), entries }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankComparison {
    /// Run id → number of classes where the run is first (ties count for
    /// every tied run).
    pub wins: BTreeMap<String, usize>,
    /// Class → run ids in first place.
    pub leaders: BTreeMap<String, Vec<String>>,
    pub classes: usize,
}

/// Counts per-class first places on `r_total` across runs. A run without a
/// score for a class does not compete on it.
pub fn rank_comparison(runs: &[EvalRun]) -> RankComparison {
    let mut by_class: BTreeMap<&str, Vec<(&str, f64)>> = BTreeMap::new();
    for run in runs {
        for (class, s) in &run.per_class {
            by_class.entry(class).or_default().push((&run.run_id, s.r_total));
        }
    }
    let mut wins: BTreeMap<String, usize> = runs.iter().map(|r| (r.run_id.clone(), 0)).collect();
    let mut leaders = BTreeMap::new();
    for (class, scores) in &by_class {
        let best = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
        let top: Vec<String> = scores.iter().filter(|s| s.1 == best).map(|s| s.0.to_string()).collect();
        for id in &top {
            *wins.entry(id.clone()).or_default() += 1;
        }
        leaders.insert(class.to_string(), top);
    }
    RankComparison { wins, leaders, classes: by_class.len() }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Archive {
    version: u32,
    runs: Vec<EvalRun>,
}

pub fn write_archive(runs: &[EvalRun]) -> String {
    let archive = Archive { version: ARCHIVE_VERSION, runs: runs.to_vec() };
    let mut s = serde_json::to_string_pretty(&archive).expect("runs serialize");
    s.push('\n');
    s
}

#[derive(Debug, thiserror::Error)]
pub enum ArchiveError {
    #[error("malformed run archive: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("run archive version {found} is not supported (expected {ARCHIVE_VERSION})")]
    Version { found: u32 },
}

pub fn read_archive(text: &str) -> Result<Vec<EvalRun>, ArchiveError> {
    let archive: Archive = serde_json::from_str(text)?;
    if archive.version != ARCHIVE_VERSION {
        return Err(ArchiveError::Version { found: archive.version });
    }
    Ok(archive.runs)
}
