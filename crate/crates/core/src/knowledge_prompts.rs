//! Attribute-decomposed knowledge descriptions and grounding prompts.
//!
//! A clinical definition plus a list of visual attributes is turned into an
//! LLM query; the LLM's answer becomes the description that is appended to
//! the abnormality name in the grounding prompt.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::error::PromptError;

pub const FILE_VERSION: u32 = 1;

/// Visual attributes used when no set is given.
pub const DEFAULT_ATTRIBUTES: [&str; 4] = ["shape", "location", "density", "color"];

const QUERY_PREFIX: &str = "Here is the medical definition of ";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbnormalityDef {
    pub name: String,
    pub definition: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl AbnormalityDef {
    pub fn new(name: impl Into<String>, definition: impl Into<String>) -> Self {
        Self { name: name.into(), definition: definition.into(), source: None }
    }
}

/// Definitions with unique, case-insensitive names.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Registry {
    defs: Vec<AbnormalityDef>,
}

impl Registry {
    pub fn new(defs: Vec<AbnormalityDef>) -> Result<Self, PromptError> {
        let mut seen = std::collections::HashSet::new();
        for d in &defs {
            if d.name.trim().is_empty() {
                return Err(PromptError::EmptyName);
            }
            if !seen.insert(fold(&d.name)) {
                return Err(PromptError::DuplicateName(d.name.clone()));
            }
        }
        Ok(Self { defs })
    }

    pub fn definitions(&self) -> &[AbnormalityDef] {
        &self.defs
    }

    pub fn get(&self, name: &str) -> Option<&AbnormalityDef> {
        let key = fold(name);
        self.defs.iter().find(|d| fold(&d.name) == key)
    }

    pub fn len(&self) -> usize {
        self.defs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defs.is_empty()
    }

    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let file: DefinitionsFile = read_versioned(path)?;
        Registry::new(file.definitions)
    }

    pub fn save(&self, path: &Path) -> Result<(), PromptError> {
        let file = DefinitionsFile { version: FILE_VERSION, definitions: self.defs.clone() };
        write_json(path, &file)
    }

    /// The definitions shipped with the crate (VinDr-CXR local labels).
    pub fn builtin() -> Self {
        let file: DefinitionsFile =
            serde_json::from_str(include_str!("../data/definitions.json")).expect("bundled definitions parse");
        Registry::new(file.definitions).expect("bundled definitions are unique")
    }
}

fn fold(s: &str) -> String {
    s.trim().to_lowercase()
}

/// Ordered, nonempty, duplicate-free list of visual attributes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct AttributeSet(Vec<String>);

impl AttributeSet {
    pub fn new<S: Into<String>>(attrs: impl IntoIterator<Item = S>) -> Result<Self, PromptError> {
        let attrs: Vec<String> = attrs.into_iter().map(|a| a.into().trim().to_string()).collect();
        if attrs.is_empty() || attrs.iter().any(String::is_empty) {
            return Err(PromptError::EmptyAttributes);
        }
        for (i, a) in attrs.iter().enumerate() {
            if attrs[..i].contains(a) {
                return Err(PromptError::DuplicateAttribute(a.clone()));
            }
        }
        Ok(Self(attrs))
    }

    pub fn as_slice(&self) -> &[String] {
        &self.0
    }
}

impl Default for AttributeSet {
    fn default() -> Self {
        Self(DEFAULT_ATTRIBUTES.iter().map(|s| s.to_string()).collect())
    }
}

impl TryFrom<Vec<String>> for AttributeSet {
    type Error = PromptError;

    fn try_from(v: Vec<String>) -> Result<Self, Self::Error> {
        AttributeSet::new(v)
    }
}

impl From<AttributeSet> for Vec<String> {
    fn from(a: AttributeSet) -> Self {
        a.0
    }
}

/// Comma-separated list, e.g. `shape,location`.
impl FromStr for AttributeSet {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AttributeSet::new(s.split(',').filter(|a| !a.trim().is_empty()))
    }
}

impl fmt::Display for AttributeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(", "))
    }
}

/// Builds the description query for one abnormality.
///
/// A single trailing period on the definition is dropped because the
/// template closes the quotation with its own period.
pub fn build_llm_query(def: &AbnormalityDef, attrs: &AttributeSet) -> Result<String, PromptError> {
    let definition = def.definition.trim();
    let definition = definition.strip_suffix('.').unwrap_or(definition).trim_end();
    if definition.is_empty() {
        return Err(PromptError::EmptyDefinition(def.name.clone()));
    }
    if def.name.trim().is_empty() {
        return Err(PromptError::EmptyName);
    }
    Ok(format!(
        "{QUERY_PREFIX}{name}: \"{definition}.\" Based on this definition and focusing on the \
         following visual attributes (e.g., {attrs}), provide a brief description of the abnormality.",
        name = def.name.trim(),
    ))
}

/// Recovers the abnormality name from a query built by [`build_llm_query`].
pub fn query_subject(query: &str) -> Option<&str> {
    query.strip_prefix(QUERY_PREFIX)?.split_once(": \"").map(|(n, _)| n)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub backend: String,
    /// Unix seconds. Kept out of the reproducible descriptions file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnowledgeDescription {
    pub name: String,
    pub description: String,
    pub provenance: Provenance,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DefinitionsFile {
    version: u32,
    definitions: Vec<AbnormalityDef>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DescriptionsFile {
    version: u32,
    descriptions: Vec<KnowledgeDescription>,
}

trait Versioned {
    fn version(&self) -> u32;
}

impl Versioned for DefinitionsFile {
    fn version(&self) -> u32 {
        self.version
    }
}

impl Versioned for DescriptionsFile {
    fn version(&self) -> u32 {
        self.version
    }
}

fn read_versioned<T: for<'de> Deserialize<'de> + Versioned>(path: &Path) -> Result<T, PromptError> {
    let text = fs::read_to_string(path).map_err(|source| PromptError::Io { path: path.to_path_buf(), source })?;
    let file: T =
        serde_json::from_str(&text).map_err(|source| PromptError::Parse { path: path.to_path_buf(), source })?;
    if file.version() != FILE_VERSION {
        return Err(PromptError::Version { path: path.to_path_buf(), found: file.version(), expected: FILE_VERSION });
    }
    Ok(file)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PromptError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|source| PromptError::Io { path: path.to_path_buf(), source })
}

/// Descriptions keyed by case-insensitive abnormality name.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DescriptionTable {
    entries: Vec<KnowledgeDescription>,
}

impl DescriptionTable {
    pub fn new(entries: Vec<KnowledgeDescription>) -> Result<Self, PromptError> {
        let mut seen = std::collections::HashSet::new();
        for e in &entries {
            if !seen.insert(fold(&e.name)) {
                return Err(PromptError::DuplicateName(e.name.clone()));
            }
            if e.description.trim().is_empty() {
                return Err(PromptError::MissingDescription(e.name.clone()));
            }
        }
        Ok(Self { entries })
    }

    pub fn get(&self, name: &str) -> Option<&KnowledgeDescription> {
        let key = fold(name);
        self.entries.iter().find(|e| fold(&e.name) == key)
    }

    pub fn entries(&self) -> &[KnowledgeDescription] {
        &self.entries
    }

    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let file: DescriptionsFile = read_versioned(path)?;
        DescriptionTable::new(file.descriptions)
    }

    /// Writes the table without timestamps so the file is reproducible.
    pub fn save(&self, path: &Path) -> Result<(), PromptError> {
        let descriptions = self
            .entries
            .iter()
            .map(|e| KnowledgeDescription {
                provenance: Provenance { backend: e.provenance.backend.clone(), generated_at: None },
                ..e.clone()
            })
            .collect();
        write_json(path, &DescriptionsFile { version: FILE_VERSION, descriptions })
    }

    /// `name → generated_at` for every entry that has a timestamp.
    pub fn timestamps(&self) -> std::collections::BTreeMap<String, u64> {
        self.entries.iter().filter_map(|e| e.provenance.generated_at.map(|t| (e.name.clone(), t))).collect()
    }

    /// The descriptions shipped with the crate.
    pub fn builtin() -> Self {
        let file: DescriptionsFile =
            serde_json::from_str(include_str!("../data/descriptions.json")).expect("bundled descriptions parse");
        DescriptionTable::new(file.descriptions).expect("bundled descriptions are valid")
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("backend returned no usable answer: {0}")]
    Failed(String),
}

/// Anything that answers a text query.
pub trait LlmBackend: Send + Sync {
    fn id(&self) -> &str;
    fn query(&self, prompt: &str) -> Result<String, BackendError>;
}

/// Offline backend answering from a description table, keyed by the
/// abnormality name embedded in the query.
#[derive(Debug, Clone)]
pub struct StubBackend {
    id: String,
    table: DescriptionTable,
}

impl StubBackend {
    pub fn new(table: DescriptionTable) -> Self {
        Self { id: "stub".to_string(), table }
    }

    pub fn builtin() -> Self {
        Self::new(DescriptionTable::builtin())
    }
}

impl LlmBackend for StubBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn query(&self, prompt: &str) -> Result<String, BackendError> {
        let name =
            query_subject(prompt).ok_or_else(|| BackendError::Failed("query does not name an abnormality".into()))?;
        self.table
            .get(name)
            .map(|d| d.description.clone())
            .ok_or_else(|| BackendError::Failed(format!("no stub entry for {name:?}")))
    }
}

/// Chat-completion style HTTP backend.
#[cfg(feature = "http")]
#[derive(Debug, Clone)]
pub struct HttpBackend {
    id: String,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    temperature: Option<f64>,
    agent: ureq::Agent,
}

#[cfg(feature = "http")]
impl HttpBackend {
    /// `api_key_env` names the environment variable holding the bearer token;
    /// an unset variable sends no credential.
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        api_key_env: &str,
        temperature: Option<f64>,
        timeout: Duration,
    ) -> Self {
        let model = model.into();
        let agent =
            ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(true).build().new_agent();
        Self {
            id: format!("http:{model}"),
            endpoint: endpoint.into(),
            api_key: std::env::var(api_key_env).ok().filter(|k| !k.is_empty()),
            model,
            temperature,
            agent,
        }
    }
}

#[cfg(feature = "http")]
impl LlmBackend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn query(&self, prompt: &str) -> Result<String, BackendError> {
        let mut body = serde_json::json!({
            "model": self.model,
            "messages": [{ "role": "user", "content": prompt }],
        });
        if let Some(t) = self.temperature {
            body["temperature"] = serde_json::json!(t);
        }
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| BackendError::Unavailable(e.to_string()))?;
        let value: serde_json::Value = resp.body_mut().read_json().map_err(|e| BackendError::Failed(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| BackendError::Failed("response has no choices[0].message.content".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct CacheEntry {
    backend: String,
    query: String,
    response: String,
    generated_at: u64,
}

/// On-disk response cache keyed by `(backend id, sha256(query))`.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, PromptError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|source| PromptError::Io { path: dir.clone(), source })?;
        Ok(Self { dir })
    }

    pub fn key(backend: &str, query: &str) -> String {
        let mut h = Sha256::new();
        h.update(backend.as_bytes());
        h.update([0u8]);
        h.update(query.as_bytes());
        hex::encode(h.finalize())
    }

    fn path(&self, backend: &str, query: &str) -> PathBuf {
        self.dir.join(format!("{}.json", Self::key(backend, query)))
    }

    fn get(&self, backend: &str, query: &str) -> Option<CacheEntry> {
        let text = fs::read_to_string(self.path(backend, query)).ok()?;
        let entry: CacheEntry = serde_json::from_str(&text).ok()?;
        (entry.backend == backend && entry.query == query).then_some(entry)
    }

    /// Write-then-rename, so concurrent writers of one key leave a whole file.
    fn put(&self, entry: &CacheEntry) -> std::io::Result<()> {
        let dest = self.path(&entry.backend, &entry.query);
        let mut tmp = tempfile_in(&self.dir)?;
        tmp.1.write_all(serde_json::to_string(entry).expect("serializable").as_bytes())?;
        tmp.1.sync_all()?;
        drop(tmp.1);
        fs::rename(&tmp.0, dest)
    }
}

fn tempfile_in(dir: &Path) -> std::io::Result<(PathBuf, fs::File)> {
    static COUNTER: AtomicUsize = AtomicUsize::new(0);
    let n = COUNTER.fetch_add(1, Ordering::Relaxed);
    let path = dir.join(format!(".tmp-{}-{n}", std::process::id()));
    let f = fs::File::create(&path)?;
    Ok((path, f))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3, initial_backoff_ms: 250, max_backoff_ms: 4000 }
    }
}

impl RetryPolicy {
    fn backoff(&self, attempt: u32) -> Duration {
        let ms = self.initial_backoff_ms.saturating_mul(1u64 << attempt.min(20)).min(self.max_backoff_ms);
        Duration::from_millis(ms)
    }
}

#[derive(Debug, Clone, Default)]
pub struct GenerateOptions {
    pub cache: Option<ResponseCache>,
    pub retry: RetryPolicy,
    /// Maximum concurrent backend calls; 0 is treated as 1.
    pub concurrency: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MissingEntry {
    pub name: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationReport {
    pub descriptions: Vec<KnowledgeDescription>,
    pub missing: Vec<MissingEntry>,
    pub backend_calls: usize,
    pub cache_hits: usize,
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

enum Outcome {
    Done(KnowledgeDescription, bool),
    Missing(MissingEntry),
}

fn describe_one(
    def: &AbnormalityDef,
    attrs: &AttributeSet,
    backend: &dyn LlmBackend,
    opts: &GenerateOptions,
    calls: &AtomicUsize,
) -> Outcome {
    let query = match build_llm_query(def, attrs) {
        Ok(q) => q,
        Err(e) => return Outcome::Missing(MissingEntry { name: def.name.clone(), error: e.to_string() }),
    };
    let done = |response: String, generated_at: u64, hit: bool| {
        Outcome::Done(
            KnowledgeDescription {
                name: def.name.clone(),
                description: response,
                provenance: Provenance { backend: backend.id().to_string(), generated_at: Some(generated_at) },
            },
            hit,
        )
    };
    if let Some(entry) = opts.cache.as_ref().and_then(|c| c.get(backend.id(), &query)) {
        return done(entry.response, entry.generated_at, true);
    }
    let attempts = opts.retry.max_attempts.max(1);
    let mut last_err = String::new();
    for attempt in 0..attempts {
        if attempt > 0 {
            std::thread::sleep(opts.retry.backoff(attempt - 1));
        }
        calls.fetch_add(1, Ordering::Relaxed);
        match backend.query(&query) {
            Ok(r) if !r.trim().is_empty() => {
                let response = r.trim().to_string();
                let generated_at = now_unix();
                if let Some(cache) = &opts.cache {
                    // A failed cache write only costs a repeat call later.
                    let _ = cache.put(&CacheEntry {
                        backend: backend.id().to_string(),
                        query: query.clone(),
                        response: response.clone(),
                        generated_at,
                    });
                }
                return done(response, generated_at, false);
            }
            Ok(_) => last_err = "empty response".to_string(),
            Err(e) => last_err = e.to_string(),
        }
    }
    Outcome::Missing(MissingEntry { name: def.name.clone(), error: format!("{last_err} (after {attempts} attempts)") })
}

/// Produces one description per definition, in registry order.
///
/// Failed entries are retried with exponential backoff and then listed in
/// [`GenerationReport::missing`]; they are never silently dropped.
pub fn generate_descriptions(
    registry: &Registry,
    attrs: &AttributeSet,
    backend: &dyn LlmBackend,
    opts: &GenerateOptions,
) -> GenerationReport {
    let defs = registry.definitions();
    let calls = AtomicUsize::new(0);
    let next = AtomicUsize::new(0);
    let workers = opts.concurrency.max(1).min(defs.len().max(1));
    let mut slots: Vec<Option<Outcome>> = (0..defs.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= defs.len() {
                            break;
                        }
                        done.push((i, describe_one(&defs[i], attrs, backend, opts, &calls)));
                    }
                    done
                })
            })
            .collect();
        for h in handles {
            for (i, outcome) in h.join().expect("description worker panicked") {
                slots[i] = Some(outcome);
            }
        }
    });
    let mut report = GenerationReport {
        descriptions: Vec::new(),
        missing: Vec::new(),
        backend_calls: calls.into_inner(),
        cache_hits: 0,
    };
    for outcome in slots.into_iter().flatten() {
        match outcome {
            Outcome::Done(d, hit) => {
                report.cache_hits += usize::from(hit);
                report.descriptions.push(d);
            }
            Outcome::Missing(m) => report.missing.push(m),
        }
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    #[default]
    LabelOnly,
    Knowledge,
}

impl FromStr for PromptMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "label_only" => Ok(PromptMode::LabelOnly),
            "knowledge" => Ok(PromptMode::Knowledge),
            other => Err(format!("unknown prompt mode {other:?} (label_only|knowledge)")),
        }
    }
}

impl fmt::Display for PromptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromptMode::LabelOnly => "label_only",
            PromptMode::Knowledge => "knowledge",
        })
    }
}

/// Grounding prompt templates; `{name}` and `{description}` are substituted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroundingTemplates {
    pub label_only: String,
    pub knowledge: String,
}

impl Default for GroundingTemplates {
    fn default() -> Self {
        Self { label_only: "Locate {name}.".to_string(), knowledge: "Locate {name}: {description}".to_string() }
    }
}

impl GroundingTemplates {
    pub fn validate(&self) -> Result<(), PromptError> {
        for t in [&self.label_only, &self.knowledge] {
            if !t.contains("{name}") {
                return Err(PromptError::BadTemplate(t.clone()));
            }
        }
        Ok(())
    }

    pub fn render(
        &self,
        name: &str,
        desc: Option<&KnowledgeDescription>,
        mode: PromptMode,
    ) -> Result<String, PromptError> {
        match mode {
            PromptMode::LabelOnly => Ok(self.label_only.replace("{name}", name)),
            PromptMode::Knowledge => {
                let d = desc
                    .map(|d| d.description.trim())
                    .filter(|d| !d.is_empty())
                    .ok_or_else(|| PromptError::MissingDescription(name.to_string()))?;
                Ok(self.knowledge.replace("{name}", name).replace("{description}", d))
            }
        }
    }
}

/// [`GroundingTemplates::render`] with the default templates.
pub fn build_grounding_prompt(
    name: &str,
    desc: Option<&KnowledgeDescription>,
    mode: PromptMode,
) -> Result<String, PromptError> {
    GroundingTemplates::default().render(name, desc, mode)
}

/// Lookup used by `build_pairs`: `name → description`.
pub fn description_index(table: &DescriptionTable) -> HashMap<String, &KnowledgeDescription> {
    table.entries().iter().map(|e| (fold(&e.name), e)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const LUNG_OPACITY_DEF: &str = "Any abnormal focal or generalized opacity or opacities in lung fields (including but not limited to consolidation, cavity, fibrosis, nodule, mass, calcification, interstitial thickening)";
    const LUNG_OPACITY_DESC: &str =
        "An area of increased density in the lung fields, typically appearing as a white or grayish patch.";

    fn lung_opacity() -> AbnormalityDef {
        AbnormalityDef::new("lung opacity", LUNG_OPACITY_DEF)
    }

    fn desc(name: &str, text: &str) -> KnowledgeDescription {
        KnowledgeDescription {
            name: name.into(),
            description: text.into(),
            provenance: Provenance { backend: "test".into(), generated_at: None },
        }
    }

    #[test]
    fn query_template() {
        let q = build_llm_query(&lung_opacity(), &AttributeSet::default()).unwrap();
        assert!(q.contains(LUNG_OPACITY_DEF));
        assert!(q.contains("(e.g., shape, location, density, color)"));
        assert_eq!(query_subject(&q), Some("lung opacity"));

        let with_period = AbnormalityDef::new("x", "a definition.");
        let q = build_llm_query(&with_period, &AttributeSet::default()).unwrap();
        assert!(q.contains("\"a definition.\" Based"));

        let single = AttributeSet::new(["shape"]).unwrap();
        assert!(build_llm_query(&lung_opacity(), &single).unwrap().contains("(e.g., shape)"));
    }

    #[test]
    fn query_errors() {
        let empty = AbnormalityDef::new("nodule", "  ");
        assert!(matches!(
            build_llm_query(&empty, &AttributeSet::default()),
            Err(PromptError::EmptyDefinition(n)) if n == "nodule"
        ));
        assert!(AttributeSet::new(Vec::<String>::new()).is_err());
        assert!(AttributeSet::new(["shape", "shape"]).is_err());
        assert_eq!("shape, color".parse::<AttributeSet>().unwrap().as_slice(), ["shape", "color"]);
    }

    #[test]
    fn registry_names_are_case_insensitive() {
        let err = Registry::new(vec![lung_opacity(), AbnormalityDef::new("Lung Opacity", "x")]);
        assert!(matches!(err, Err(PromptError::DuplicateName(_))));
        let reg = Registry::new(vec![lung_opacity()]).unwrap();
        assert!(reg.get("LUNG OPACITY").is_some());
    }

    #[test]
    fn grounding_prompts() {
        assert_eq!(
            build_grounding_prompt("lung opacity", None, PromptMode::LabelOnly).unwrap(),
            "Locate lung opacity."
        );
        let d = desc("lung opacity", LUNG_OPACITY_DESC);
        assert_eq!(
            build_grounding_prompt("lung opacity", Some(&d), PromptMode::Knowledge).unwrap(),
            format!("Locate lung opacity: {LUNG_OPACITY_DESC}")
        );
        assert!(matches!(
            build_grounding_prompt("x", None, PromptMode::Knowledge),
            Err(PromptError::MissingDescription(_))
        ));
    }

    #[test]
    fn stub_generation() {
        let table = DescriptionTable::new(vec![desc("lung opacity", LUNG_OPACITY_DESC)]).unwrap();
        let backend = StubBackend::new(table);
        let reg = Registry::new(vec![lung_opacity()]).unwrap();
        let report = generate_descriptions(&reg, &AttributeSet::default(), &backend, &GenerateOptions::default());
        assert_eq!(report.descriptions.len(), 1);
        assert_eq!(report.descriptions[0].description, LUNG_OPACITY_DESC);
        assert_eq!(report.descriptions[0].provenance.backend, "stub");
        assert!(report.missing.is_empty());

        let empty = generate_descriptions(
            &Registry::default(),
            &AttributeSet::default(),
            &backend,
            &GenerateOptions::default(),
        );
        assert!(empty.descriptions.is_empty() && empty.missing.is_empty());
    }

    struct Failing(AtomicUsize);

    impl LlmBackend for Failing {
        fn id(&self) -> &str {
            "failing"
        }
        fn query(&self, _: &str) -> Result<String, BackendError> {
            self.0.fetch_add(1, Ordering::Relaxed);
            Err(BackendError::Unavailable("down".into()))
        }
    }

    #[test]
    fn failures_are_retried_then_reported() {
        let backend = Failing(AtomicUsize::new(0));
        let reg = Registry::new(vec![lung_opacity(), AbnormalityDef::new("nodule", "a round opacity")]).unwrap();
        let opts = GenerateOptions {
            retry: RetryPolicy { max_attempts: 3, initial_backoff_ms: 0, max_backoff_ms: 0 },
            concurrency: 2,
            ..Default::default()
        };
        let report = generate_descriptions(&reg, &AttributeSet::default(), &backend, &opts);
        assert!(report.descriptions.is_empty());
        assert_eq!(report.missing.len(), 2);
        assert_eq!(backend.0.load(Ordering::Relaxed), 6);
        assert_eq!(report.missing[0].name, "lung opacity");
        assert_eq!(report.missing[1].name, "nodule");
    }

    #[test]
    fn cache_makes_second_run_free() {
        let dir = tempfile::tempdir().unwrap();
        let backend = StubBackend::builtin();
        let reg = Registry::builtin();
        let opts = GenerateOptions {
            cache: Some(ResponseCache::open(dir.path()).unwrap()),
            concurrency: 4,
            ..Default::default()
        };
        let first = generate_descriptions(&reg, &AttributeSet::default(), &backend, &opts);
        assert_eq!(first.backend_calls, reg.len());
        assert!(first.missing.is_empty());
        let second = generate_descriptions(&reg, &AttributeSet::default(), &backend, &opts);
        assert_eq!(second.backend_calls, 0);
        assert_eq!(second.cache_hits, reg.len());
        assert_eq!(first.descriptions, second.descriptions);
    }

    #[test]
    fn backoff_is_bounded() {
        let p = RetryPolicy { max_attempts: 10, initial_backoff_ms: 100, max_backoff_ms: 1000 };
        assert_eq!(p.backoff(0), Duration::from_millis(100));
        assert_eq!(p.backoff(2), Duration::from_millis(400));
        assert_eq!(p.backoff(9), Duration::from_millis(1000));
    }

    #[test]
    fn descriptions_file_round_trip_drops_timestamps() {
        let dir = tempfile::tempdir().unwrap();
        let mut d = desc("a", "text");
        d.provenance.generated_at = Some(7);
        let table = DescriptionTable::new(vec![d]).unwrap();
        assert_eq!(table.timestamps().get("a"), Some(&7));
        let path = dir.path().join("d.json");
        table.save(&path).unwrap();
        let back = DescriptionTable::load(&path).unwrap();
        assert_eq!(back.entries()[0].provenance.generated_at, None);
        assert_eq!(back.entries()[0].description, "text");
    }

    #[test]
    fn builtin_tables_cover_each_other() {
        let reg = Registry::builtin();
        let table = DescriptionTable::builtin();
        assert!(reg.len() >= 20);
        for d in reg.definitions() {
            assert!(table.get(&d.name).is_some(), "{}", d.name);
        }
    }
}
