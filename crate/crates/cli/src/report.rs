use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::Subcommand;
use groundkit_core::report::{
    comparison_table, per_class_chart_data, rank_comparison, read_archive, EvalRun, TableFormat,
};

use crate::error::{read_text, write_text, CliError, CliResult};

#[derive(Subcommand, Debug)]
pub enum ReportCmd {
    /// Comparison table, one row per run.
    Table {
        /// Run archives written by `eval`.
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        /// markdown | csv | json [default: markdown]
        #[arg(long, default_value = "markdown")]
        format: TableFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-class r_total chart data (JSON) for one run.
    Chart {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        /// Run to chart [default: the first].
        #[arg(long)]
        run_id: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-class first-place counts across runs (JSON).
    Ranks {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Contents of a `*.meta.json` sidecar: everything that varies between runs.
pub fn meta_sidecar() -> String {
    let v = serde_json::json!({
        "generated": now_unix(),
        "tool": "groundkit",
        "version": env!("CARGO_PKG_VERSION"),
    });
    serde_json::to_string_pretty(&v).expect("json") + "\n"
}

fn load(paths: &[PathBuf]) -> CliResult<Vec<EvalRun>> {
    let mut runs = Vec::new();
    for p in paths {
        runs.extend(read_archive(&read_text(p)?).map_err(|e| CliError::io_msg(format!("{}: {e}", p.display())))?);
    }
    Ok(runs)
}

fn emit(out: Option<PathBuf>, text: String) -> CliResult<()> {
    match out {
        Some(p) => write_text(&p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("json") + "\n"
}

pub fn run(cmd: ReportCmd) -> CliResult<()> {
    match cmd {
        ReportCmd::Table { runs, format, out } => {
            let runs = load(&runs)?;
            emit(out, comparison_table(&runs, format))
        }
        ReportCmd::Chart { runs, run_id, out } => {
            let runs = load(&runs)?;
            let run = match &run_id {
                Some(id) => runs
                    .iter()
                    .find(|r| &r.run_id == id)
                    .ok_or_else(|| CliError::invalid_msg(format!("no run {id:?} in the archives")))?,
                None => runs.first().ok_or_else(|| CliError::invalid_msg("archives hold no runs"))?,
            };
            if run.per_class.is_empty() {
                return Err(CliError::invalid_msg(format!("run {:?} has no per-class scores", run.run_id)));
            }
            emit(out, json(&per_class_chart_data(run)))
        }
        ReportCmd::Ranks { runs, out } => {
            let runs = load(&runs)?;
            emit(out, json(&rank_comparison(&runs)))
        }
    }
}
