use std::path::PathBuf;

use clap::{Args, Subcommand};
use groundkit_core::geometry::{ImageDims, PixelBox};
use groundkit_core::token_codec::{split_tokens, DecodePolicy, Rounding};

use crate::config::ToolConfig;
use crate::error::{read_text, write_text, CliError, CliResult};

#[derive(Subcommand, Debug)]
pub enum TokensCmd {
    /// Boxes `x0,y0,x1,y1` (one per argument or input line) to tokens.
    Encode {
        #[command(flatten)]
        common: Common,
        boxes: Vec<String>,
    },
    /// Token text to `x0,y0,x1,y1` lines, one per decoded box.
    Decode {
        #[command(flatten)]
        common: Common,
        /// strict | repair [default: repair]
        #[arg(long)]
        policy: Option<DecodePolicy>,
        tokens: Vec<String>,
    },
}

#[derive(Args, Debug)]
pub struct Common {
    /// Image size as WIDTHxHEIGHT.
    #[arg(long)]
    dims: ImageDims,
    /// Largest bin index [default: 1000].
    #[arg(long)]
    bins: Option<u32>,
    /// half_away_from_zero | half_even | floor [default: half_away_from_zero]
    #[arg(long, value_parser = parse_rounding)]
    rounding: Option<Rounding>,
    /// Read input from a file instead of arguments.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Write output to a file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_rounding(s: &str) -> Result<Rounding, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown rounding {s:?} (half_away_from_zero|half_even|floor)"))
}

fn inputs(common: &Common, args: Vec<String>) -> CliResult<Vec<String>> {
    match &common.input {
        Some(p) => Ok(read_text(p)?.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect()),
        None => Ok(args),
    }
}

fn emit(common: &Common, text: String) -> CliResult<()> {
    match &common.out {
        Some(p) => write_text(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn parse_box(s: &str) -> CliResult<PixelBox> {
    let parts: Vec<&str> = s.split([',', ' ']).filter(|p| !p.is_empty()).collect();
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::invalid_msg(format!("cannot parse box {s:?}")))?;
    match nums[..] {
        [x0, y0, x1, y1] => Ok(PixelBox::new(x0, y0, x1, y1)),
        _ => Err(CliError::invalid_msg(format!("box {s:?} needs four numbers x0,y0,x1,y1"))),
    }
}

pub fn run(cmd: TokensCmd, mut cfg: ToolConfig) -> CliResult<()> {
    match cmd {
        TokensCmd::Encode { common, boxes } => {
            apply(&common, &mut cfg);
            let q = cfg.codec.quantizer()?;
            let mut out = String::new();
            for line in inputs(&common, boxes)? {
                let quad = q.encode_box(&parse_box(&line)?, common.dims)?;
                out.push_str(&quad.to_string());
                out.push('\n');
            }
            emit(&common, out)
        }
        TokensCmd::Decode { common, policy, tokens } => {
            apply(&common, &mut cfg);
            if let Some(p) = policy {
                cfg.codec.policy = p;
            }
            let q = cfg.codec.quantizer()?;
            let text = inputs(&common, tokens)?.join(" ");
            let parsed = q.parse_sequence(&split_tokens(&text), common.dims, cfg.codec.policy)?;
            for d in &parsed.diagnostics {
                eprintln!("warning: {d}");
            }
            let mut out = String::new();
            for b in &parsed.boxes {
                let [x0, y0, x1, y1] = b.bbox.coords();
                out.push_str(&format!("{x0},{y0},{x1},{y1}\n"));
            }
            emit(&common, out)
        }
    }
}

fn apply(common: &Common, cfg: &mut ToolConfig) {
    if let Some(b) = common.bins {
        cfg.codec.max_bin = b;
    }
    if let Some(r) = common.rounding {
        cfg.codec.rounding = r;
    }
}
