//! Model access for every phase of the search.
//!
//! A [`ChatBackend`] turns a [`GenerationRequest`] into raw completion text.
//! Two implementations ship: [`HttpBackend`] speaks the chat-completions wire
//! protocol and [`ScriptedBackend`] answers from fixtures, deterministically.
//! [`ReasoningModel`] layers the phase semantics (duplicate retries, score
//! parsing, end-marker detection, code extraction) on top of any backend.

mod http;
mod policy;
pub mod prompts;
mod scripted;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use http::{HttpBackend, ReqwestTransport, Transport, TransportError};
pub use policy::{
    parse_score, CodeConversion, ModelSettings, Principle, ReasoningModel, ReflectionResult, StepScore,
    TranscriptEntry,
};
pub use scripted::{DefaultRule, FixtureRule, ScriptedBackend};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("backend returned no usable text")]
    EmptyCompletion,
    #[error("every one of {attempts} generated steps duplicated an existing sibling")]
    DuplicateExhausted { attempts: usize },
    #[error("backend configuration: {0}")]
    Config(String),
}

/// Which search phase a request belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Expand,
    Score,
    Reflect,
    Code,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Expand => "expand",
            Phase::Score => "score",
            Phase::Reflect => "reflect",
            Phase::Code => "code",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionLabel {
    Question,
    State,
    Sibling,
    Reflection,
    Step,
    Thinking,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSection {
    pub label: SectionLabel,
    pub text: String,
}

/// Everything a backend needs to produce one completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub phase: Phase,
    pub sections: Vec<PromptSection>,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub stop: Vec<String>,
    /// Retry counter within one logical call; lets deterministic backends vary.
    pub attempt: u32,
    /// Depth of the node the request concerns, when there is one.
    pub depth: Option<usize>,
}

impl GenerationRequest {
    pub fn new(phase: Phase) -> Self {
        Self {
            phase,
            sections: Vec::new(),
            temperature: 0.0,
            top_p: 1.0,
            max_tokens: 512,
            stop: Vec::new(),
            attempt: 0,
            depth: None,
        }
    }

    pub fn section(mut self, label: SectionLabel, text: impl Into<String>) -> Self {
        self.sections.push(PromptSection { label, text: text.into() });
        self
    }

    pub fn first(&self, label: SectionLabel) -> Option<&str> {
        self.sections.iter().find(|s| s.label == label).map(|s| s.text.as_str())
    }

    pub fn all(&self, label: SectionLabel) -> Vec<&str> {
        self.sections
            .iter()
            .filter(|s| s.label == label)
            .map(|s| s.text.as_str())
            .collect()
    }

    /// Hex SHA-256 of the request's canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("request serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// A source of completions. Implementations must tolerate concurrent calls.
pub trait ChatBackend: Send + Sync {
    fn name(&self) -> String;
    fn complete(&self, request: &GenerationRequest) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    #[default]
    Scripted,
}

/// Serializable description of a backend, resolved by [`BackendDescriptor::build`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendDescriptor {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub model_name: Option<String>,
    /// Name of the environment variable holding the bearer token.
    pub auth_token_env: Option<String>,
    pub script_path: Option<PathBuf>,
    pub inline_rules: Vec<FixtureRule>,
    pub request_timeout_secs: f64,
    pub max_attempts: usize,
    pub max_concurrent_requests: usize,
    /// Scripted fallback: reflect with the end marker at this depth.
    pub end_at_depth: Option<usize>,
    /// Scripted fallback: probability of reflecting with the end marker.
    pub end_rate: f64,
}

impl Default for BackendDescriptor {
    fn default() -> Self {
        Self {
            kind: BackendKind::Scripted,
            endpoint: None,
            model_name: None,
            auth_token_env: None,
            script_path: None,
            inline_rules: Vec::new(),
            request_timeout_secs: 120.0,
            max_attempts: 3,
            max_concurrent_requests: 8,
            end_at_depth: None,
            end_rate: 0.0,
        }
    }
}

impl BackendDescriptor {
    pub fn http(endpoint: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            kind: BackendKind::Http,
            endpoint: Some(endpoint.into()),
            model_name: Some(model_name.into()),
            ..Self::default()
        }
    }

    pub fn scripted_rules(rules: Vec<FixtureRule>) -> Self {
        Self { inline_rules: rules, ..Self::default() }
    }

    pub fn scripted_file(path: impl Into<PathBuf>) -> Self {
        Self { script_path: Some(path.into()), ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let cfg = |m: &str| Err(BackendError::Config(m.to_string()));
        if self.max_attempts == 0 {
            return cfg("max_attempts must be positive");
        }
        if self.max_concurrent_requests == 0 {
            return cfg("max_concurrent_requests must be positive");
        }
        if !(self.request_timeout_secs > 0.0 && self.request_timeout_secs.is_finite()) {
            return cfg("request_timeout_secs must be positive");
        }
        match self.kind {
            BackendKind::Http if self.endpoint.is_none() || self.model_name.is_none() => {
                cfg("http backend needs both endpoint and model_name")
            }
            BackendKind::Scripted if self.script_path.is_none() && self.inline_rules.is_empty() => {
                cfg("scripted backend needs script_path or inline_rules")
            }
            _ if !(0.0..=1.0).contains(&self.end_rate) => cfg("end_rate must lie in [0, 1]"),
            _ => Ok(()),
        }
    }

    pub fn request_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.request_timeout_secs)
    }

    /// Instantiates the backend. `seed` feeds the scripted fallback rule.
    pub fn build(&self, seed: Option<u64>) -> Result<Arc<dyn ChatBackend>, BackendError> {
        self.validate()?;
        match self.kind {
            BackendKind::Http => {
                let token = match &self.auth_token_env {
                    Some(var) => Some(std::env::var(var).map_err(|_| {
                        BackendError::Config(format!("environment variable {var} is not set"))
                    })?),
                    None => None,
                };
                let transport = ReqwestTransport::new()?;
                Ok(Arc::new(HttpBackend::new(
                    self.endpoint.clone().unwrap_or_default(),
                    self.model_name.clone().unwrap_or_default(),
                    token,
                    Arc::new(transport),
                    self.max_attempts,
                    self.request_timeout(),
                    self.max_concurrent_requests,
                )))
            }
            BackendKind::Scripted => {
                let mut rules = match &self.script_path {
                    Some(p) => ScriptedBackend::load_rules(p)?,
                    None => Vec::new(),
                };
                rules.extend(self.inline_rules.iter().cloned());
                let fallback = DefaultRule {
                    seed: seed.unwrap_or(0),
                    end_at_depth: self.end_at_depth,
                    end_rate: self.end_rate,
                };
                Ok(Arc::new(ScriptedBackend::new(rules, fallback)))
            }
        }
    }
}
