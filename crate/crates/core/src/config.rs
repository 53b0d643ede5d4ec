//! Pipeline configuration with layered sources.
//!
//! Precedence, lowest to highest: built-in defaults, a TOML config file,
//! environment variables, command-line flags. Layers are merged as JSON trees
//! and the result is deserialized once, so every layer is validated by the
//! same schema.
//!
//! Environment variables use the `REASONING_MCTS_` prefix with `__` between
//! nesting levels, e.g. `REASONING_MCTS_SEARCH__ALPHA=0.4` or
//! `REASONING_MCTS_PARALLELISM=8`. Values are parsed as JSON when possible and
//! taken as strings otherwise. Secrets never live in the config: the backend
//! only records the *name* of the variable holding its token.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::backend::{BackendDescriptor, ModelSettings};
use crate::data::{SftFormat, DEFAULT_NGRAM, DEFAULT_THRESHOLD};
use crate::eval::{EvalConfig, SandboxConfig, Split};
use crate::tree::SearchConfig;

pub const ENV_PREFIX: &str = "REASONING_MCTS_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file {path}: {message}")]
    File { path: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub questions: Option<PathBuf>,
    pub benchmarks: Option<PathBuf>,
    /// Defaults to `<output_dir>/outcomes.jsonl`.
    pub checkpoint: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub tasks: Option<PathBuf>,
    pub samples: Option<PathBuf>,
    pub difficulty: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecontaminationConfig {
    pub ngram: usize,
    pub threshold: f64,
}

impl Default for DecontaminationConfig {
    fn default() -> Self {
        Self { ngram: DEFAULT_NGRAM, threshold: DEFAULT_THRESHOLD }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub k: Vec<u64>,
    pub split: Split,
    /// Evaluate the tasks' bundled reference solutions instead of a samples file.
    pub reference: bool,
    pub sandbox: SandboxConfig,
    /// Concurrent sandboxed executions; 0 uses the number of CPUs.
    pub workers: usize,
}

impl EvalSection {
    pub fn run_config(&self) -> EvalConfig {
        EvalConfig { sandbox: self.sandbox.clone(), workers: self.workers }
    }
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { k: vec![1], split: Split::Full, reference: false, sandbox: SandboxConfig::default(), workers: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub search: SearchConfig,
    pub backend: BackendDescriptor,
    pub model: ModelSettings,
    pub paths: Paths,
    pub decontamination: DecontaminationConfig,
    pub sft_format: SftFormat,
    pub eval: EvalSection,
    pub parallelism: usize,
    pub log_level: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            search: SearchConfig::default(),
            backend: BackendDescriptor::default(),
            model: ModelSettings::default(),
            paths: Paths { output_dir: PathBuf::from("out"), ..Paths::default() },
            decontamination: DecontaminationConfig::default(),
            sft_format: SftFormat::default(),
            eval: EvalSection::default(),
            parallelism: 1,
            log_level: "info".to_string(),
        }
    }
}

impl PipelineConfig {
    pub fn checkpoint_path(&self) -> PathBuf {
        self.paths
            .checkpoint
            .clone()
            .unwrap_or_else(|| self.paths.output_dir.join("outcomes.jsonl"))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.search.validate().map_err(ConfigError::Invalid)?;
        if self.parallelism == 0 {
            return Err(ConfigError::Invalid("parallelism must be positive".into()));
        }
        if self.decontamination.ngram == 0 {
            return Err(ConfigError::Invalid("ngram must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.decontamination.threshold) {
            return Err(ConfigError::Invalid("threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Recursively overlays `top` onto `base`. Objects merge key by key; any other
/// value replaces.
pub fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Sets `value` at a dotted path, creating intermediate objects.
pub fn set_path(root: &mut Value, path: &[&str], value: Value) {
    let mut cur = root;
    for (i, key) in path.iter().enumerate() {
        if !cur.is_object() {
            *cur = Value::Object(Map::new());
        }
        let map = cur.as_object_mut().expect("object");
        if i + 1 == path.len() {
            map.insert((*key).to_string(), value);
            return;
        }
        cur = map.entry((*key).to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
}

pub fn file_layer(path: &Path) -> Result<Value, ConfigError> {
    let err = |message: String| ConfigError::File { path: path.display().to_string(), message };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let table: toml::Value = toml::from_str(&text).map_err(|e| err(e.to_string()))?;
    serde_json::to_value(table).map_err(|e| err(e.to_string()))
}

fn scalar(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Layer built from `REASONING_MCTS_*` variables. Variables whose first
/// segment is not a top-level config key are ignored.
pub fn env_layer<I: IntoIterator<Item = (String, String)>>(vars: I) -> Value {
    let known = serde_json::to_value(PipelineConfig::default()).expect("defaults serialize");
    let mut layer = Value::Object(Map::new());
    for (key, raw) in vars {
        let Some(rest) = key.strip_prefix(ENV_PREFIX) else { continue };
        let path: Vec<String> = rest.split("__").map(str::to_ascii_lowercase).collect();
        if path.is_empty() || known.get(&path[0]).is_none() {
            continue;
        }
        let refs: Vec<&str> = path.iter().map(String::as_str).collect();
        set_path(&mut layer, &refs, scalar(&raw));
    }
    layer
}

/// Assembles the effective configuration from all layers.
pub fn resolve(file: Option<&Path>, env: Value, flags: Value) -> Result<PipelineConfig, ConfigError> {
    let mut tree = serde_json::to_value(PipelineConfig::default()).expect("defaults serialize");
    if let Some(path) = file {
        merge(&mut tree, file_layer(path)?);
    }
    merge(&mut tree, env);
    merge(&mut tree, flags);
    let cfg: PipelineConfig = serde_json::from_value(tree).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn defaults_match_documented_values() {
        let c = PipelineConfig::default();
        assert_eq!(c.search, SearchConfig::default());
        assert_eq!((c.decontamination.ngram, c.decontamination.threshold), (10, 0.3));
        c.validate().unwrap();
    }

    #[test]
    fn precedence_flags_env_file_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("cfg.toml");
        std::fs::write(
            &file,
            "parallelism = 2\n[search]\nalpha = 0.1\nbranching = 4\niteration_limit = 7\n",
        )
        .unwrap();
        let env = env_layer(vec![
            ("REASONING_MCTS_SEARCH__BRANCHING".to_string(), "5".to_string()),
            ("REASONING_MCTS_SEARCH__ITERATION_LIMIT".to_string(), "8".to_string()),
            ("REASONING_MCTS_NOT_A_KEY".to_string(), "x".to_string()),
            ("UNRELATED".to_string(), "1".to_string()),
        ]);
        let mut flags = json!({});
        set_path(&mut flags, &["search", "iteration_limit"], json!(9));
        let c = resolve(Some(&file), env, flags).unwrap();
        assert_eq!(c.search.exploration_c, 0.5); // default
        assert_eq!(c.search.alpha, 0.1); // file
        assert_eq!(c.parallelism, 2); // file
        assert_eq!(c.search.branching, 5); // env over file
        assert_eq!(c.search.iteration_limit, 9); // flag over env
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("cfg.toml");
        std::fs::write(&file, "[backend]\napi_key = \"secret\"\n").unwrap();
        assert!(resolve(Some(&file), json!({}), json!({})).is_err());
        let bad = json!({"search": {"alpha": 2.0}});
        assert!(matches!(resolve(None, json!({}), bad), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn env_strings_and_numbers() {
        let env = env_layer(vec![
            ("REASONING_MCTS_BACKEND__ENDPOINT".to_string(), "http://localhost:8000/v1".to_string()),
            ("REASONING_MCTS_BACKEND__KIND".to_string(), "http".to_string()),
            ("REASONING_MCTS_BACKEND__MODEL_NAME".to_string(), "m".to_string()),
        ]);
        let c = resolve(None, env, json!({})).unwrap();
        assert_eq!(c.backend.endpoint.as_deref(), Some("http://localhost:8000/v1"));
    }
}
