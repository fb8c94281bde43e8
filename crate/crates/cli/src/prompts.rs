use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, Subcommand};
use groundkit_core::knowledge_prompts::{
    build_llm_query, generate_descriptions, AttributeSet, DescriptionTable, GenerateOptions, LlmBackend, Registry,
    ResponseCache, StubBackend,
};

use crate::config::{BackendKind, ToolConfig};
use crate::error::{write_text, CliError, CliResult};

#[derive(Subcommand, Debug)]
pub enum PromptsCmd {
    /// Print the LLM query for each definition, one per line.
    Query {
        #[command(flatten)]
        common: Common,
        /// Only this abnormality (case-insensitive).
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ask a backend for one description per definition.
    Generate {
        #[command(flatten)]
        common: Common,
        /// stub | http [default: stub]
        #[arg(long)]
        backend: Option<BackendKind>,
        /// Descriptions file answering stub queries [default: bundled table].
        #[arg(long)]
        stub_table: Option<PathBuf>,
        /// Chat-completions URL for the http backend.
        #[arg(long)]
        endpoint: Option<String>,
        /// Model name sent to the http backend [default: gpt-4o].
        #[arg(long)]
        model: Option<String>,
        /// Response cache directory [default: none].
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Descriptions file to write.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
pub struct Common {
    /// Definitions file [default: bundled table].
    #[arg(long)]
    registry: Option<PathBuf>,
    /// Comma-separated visual attributes [default: shape, location, density, color].
    #[arg(long)]
    attrs: Option<AttributeSet>,
}

impl Common {
    fn resolve(&self, cfg: &mut ToolConfig) -> CliResult<Registry> {
        if let Some(r) = &self.registry {
            cfg.prompts.registry = Some(r.clone());
        }
        if let Some(a) = &self.attrs {
            cfg.prompts.attributes = a.clone();
        }
        Ok(match &cfg.prompts.registry {
            Some(p) => Registry::load(p)?,
            None => Registry::builtin(),
        })
    }
}

pub fn run(cmd: PromptsCmd, mut cfg: ToolConfig) -> CliResult<()> {
    match cmd {
        PromptsCmd::Query { common, name, out } => {
            let reg = common.resolve(&mut cfg)?;
            let defs: Vec<_> = match &name {
                Some(n) => {
                    vec![reg.get(n).ok_or_else(|| CliError::invalid_msg(format!("no definition named {n:?}")))?]
                }
                None => reg.definitions().iter().collect(),
            };
            let mut text = String::new();
            for d in defs {
                text.push_str(&build_llm_query(d, &cfg.prompts.attributes)?);
                text.push('\n');
            }
            match out {
                Some(p) => write_text(&p, &text),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
        PromptsCmd::Generate { common, backend, stub_table, endpoint, model, cache, out } => {
            let reg = common.resolve(&mut cfg)?;
            if let Some(b) = backend {
                cfg.prompts.backend = b;
            }
            if let Some(e) = endpoint {
                cfg.prompts.http.endpoint = e;
            }
            if let Some(m) = model {
                cfg.prompts.http.model = m;
            }
            if let Some(c) = cache {
                cfg.prompts.cache_dir = Some(c);
            }
            let backend: Box<dyn LlmBackend> = match cfg.prompts.backend {
                BackendKind::Stub => Box::new(match &stub_table {
                    Some(p) => StubBackend::new(DescriptionTable::load(p)?),
                    None => StubBackend::builtin(),
                }),
                BackendKind::Http => {
                    let h = &cfg.prompts.http;
                    Box::new(groundkit_core::knowledge_prompts::HttpBackend::new(
                        h.endpoint.clone(),
                        h.model.clone(),
                        &h.api_key_env,
                        h.temperature,
                        Duration::from_secs(h.timeout_secs),
                    ))
                }
            };
            let opts = GenerateOptions {
                cache: cfg.prompts.cache_dir.as_ref().map(ResponseCache::open).transpose()?,
                retry: cfg.prompts.retry,
                concurrency: cfg.prompts.concurrency,
            };
            let report = generate_descriptions(&reg, &cfg.prompts.attributes, backend.as_ref(), &opts);
            let table = DescriptionTable::new(report.descriptions)?;
            table.save(&out)?;
            let meta = serde_json::json!({
                "generated": crate::report::now_unix(),
                "backend": backend.id(),
                "backend_calls": report.backend_calls,
                "cache_hits": report.cache_hits,
                "entry_timestamps": table.timestamps(),
                "missing": report.missing,
            });
            let mut sidecar = out.clone().into_os_string();
            sidecar.push(".meta.json");
            write_text(&PathBuf::from(sidecar), &(serde_json::to_string_pretty(&meta).expect("json") + "\n"))?;
            eprintln!(
                "{} descriptions, {} missing, {} backend calls, {} cache hits",
                table.entries().len(),
                report.missing.len(),
                report.backend_calls,
                report.cache_hits
            );
            if report.missing.is_empty() {
                Ok(())
            } else {
                let list: Vec<String> = report.missing.iter().map(|m| format!("{}: {}", m.name, m.error)).collect();
                Err(CliError::invalid_msg(format!("{} entries missing:\n  {}", list.len(), list.join("\n  "))))
            }
        }
    }
}
