//! Tool configuration: TOML file, then command-line overrides.

use std::path::{Path, PathBuf};

use groundkit_core::box_fusion::FusionConfig;
use groundkit_core::dataset_ingest::AliasMap;
use groundkit_core::knowledge_prompts::{AttributeSet, GroundingTemplates, PromptMode, RetryPolicy};
use groundkit_core::metrics_map::Interpolation;
use groundkit_core::metrics_rodeo::RodeoConfig;
use groundkit_core::token_codec::{DecodePolicy, Quantizer, Rounding};
use serde::{Deserialize, Serialize};

use crate::error::{read_text, CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToolConfig {
    pub fusion: FusionConfig,
    pub codec: CodecConfig,
    pub metrics: MetricsConfig,
    pub prompts: PromptsConfig,
    pub dataset: DatasetConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodecConfig {
    pub max_bin: u32,
    pub rounding: Rounding,
    pub policy: DecodePolicy,
}

impl Default for CodecConfig {
    fn default() -> Self {
        let q = Quantizer::default();
        Self { max_bin: q.max_bin, rounding: q.rounding, policy: DecodePolicy::default() }
    }
}

impl CodecConfig {
    pub fn quantizer(&self) -> CliResult<Quantizer> {
        Quantizer::new(self.max_bin, self.rounding).map_err(CliError::invalid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub interpolation: Interpolation,
    pub rodeo: RodeoConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Stub,
    Http,
}

impl std::str::FromStr for BackendKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stub" => Ok(Self::Stub),
            "http" => Ok(Self::Http),
            other => Err(format!("unknown backend {other:?} (stub|http)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HttpConfig {
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    pub temperature: Option<f64>,
    pub timeout_secs: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "gpt-4o".into(),
            api_key_env: "GROUNDKIT_API_KEY".into(),
            temperature: None,
            timeout_secs: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PromptsConfig {
    pub mode: PromptMode,
    pub attributes: AttributeSet,
    pub templates: GroundingTemplates,
    pub backend: BackendKind,
    pub http: HttpConfig,
    pub retry: RetryPolicy,
    pub concurrency: usize,
    /// Definitions file; the bundled table when unset.
    pub registry: Option<PathBuf>,
    /// Descriptions file for knowledge prompts; the bundled table when unset.
    pub descriptions: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
}

impl Default for PromptsConfig {
    fn default() -> Self {
        Self {
            mode: PromptMode::default(),
            attributes: AttributeSet::default(),
            templates: GroundingTemplates::default(),
            backend: BackendKind::default(),
            http: HttpConfig::default(),
            retry: RetryPolicy::default(),
            concurrency: 4,
            registry: None,
            descriptions: None,
            cache_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub train_fraction: f64,
    pub seed: u64,
    /// Explicit split lists (one image id per line); override the ratio split.
    pub train_list: Option<PathBuf>,
    pub test_list: Option<PathBuf>,
    /// Builds abort when rejected rows exceed this fraction of all rows.
    pub max_reject_fraction: f64,
    pub no_finding_labels: Vec<String>,
    /// Classes treated as seen in training; empty disables the partition.
    pub known_classes: Vec<String>,
    pub aliases: AliasMap,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.9,
            seed: 0,
            train_list: None,
            test_list: None,
            max_reject_fraction: 0.05,
            no_finding_labels: vec!["No finding".into()],
            known_classes: Vec::new(),
            aliases: AliasMap::default(),
        }
    }
}

impl ToolConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = read_text(path)?;
        toml::from_str(&text).map_err(|e| CliError::io_msg(format!("config {}: {e}", path.display())))
    }

    pub fn fingerprint(&self) -> String {
        groundkit_core::report::fingerprint(self)
    }
}
