use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendError, ChatBackend, GenerationRequest, Phase, SectionLabel};
use crate::corpus::read_jsonl;

/// One fixture record. A rule matches when every field it sets agrees with the
/// request; the first matching rule answers. Rules keyed by `fingerprint` are
/// consulted before all others.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureRule {
    pub fingerprint: Option<String>,
    pub phase: Option<Phase>,
    /// Substring that must occur in one of the request's text sections.
    pub contains: Option<String>,
    pub depth: Option<usize>,
    pub attempt: Option<u32>,
    pub response: String,
    /// Answer with a transport failure instead of `response`.
    pub unavailable: bool,
}

impl FixtureRule {
    pub fn respond(response: impl Into<String>) -> Self {
        Self { response: response.into(), ..Self::default() }
    }

    pub fn phase(mut self, phase: Phase) -> Self {
        self.phase = Some(phase);
        self
    }

    pub fn containing(mut self, needle: impl Into<String>) -> Self {
        self.contains = Some(needle.into());
        self
    }

    pub fn at_depth(mut self, depth: usize) -> Self {
        self.depth = Some(depth);
        self
    }

    pub fn for_fingerprint(mut self, fp: impl Into<String>) -> Self {
        self.fingerprint = Some(fp.into());
        self
    }

    pub fn down() -> Self {
        Self { unavailable: true, ..Self::default() }
    }

    fn matches(&self, request: &GenerationRequest, fingerprint: &str) -> bool {
        self.fingerprint.as_deref().is_none_or(|f| f == fingerprint)
            && self.phase.is_none_or(|p| p == request.phase)
            && self.depth.is_none_or(|d| Some(d) == request.depth)
            && self.attempt.is_none_or(|a| a == request.attempt)
            && self
                .contains
                .as_deref()
                .is_none_or(|needle| request.sections.iter().any(|s| s.text.contains(needle)))
    }
}

/// Synthesizes answers for requests no fixture covers. Every answer is a pure
/// function of the request fingerprint and the seed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DefaultRule {
    pub seed: u64,
    pub end_at_depth: Option<usize>,
    pub end_rate: f64,
}

const VERBS: &[&str] = &[
    "Identify", "Track", "Sort", "Count", "Compare", "Partition", "Accumulate", "Validate",
    "Memoize", "Scan",
];
const OBJECTS: &[&str] = &[
    "the input boundaries",
    "the running total",
    "each candidate pair",
    "the visited positions",
    "the prefix sums",
    "the edge cases for empty input",
    "the frequency of every element",
    "the current best answer",
];

impl DefaultRule {
    fn digest(&self, fingerprint: &str) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(fingerprint.as_bytes());
        h.finalize().into()
    }

    pub fn answer(&self, request: &GenerationRequest, fingerprint: &str) -> String {
        let d = self.digest(fingerprint);
        let tag = hex::encode(&d[..3]);
        match request.phase {
            Phase::Expand => {
                let k = request.all(SectionLabel::Sibling).len() + 1;
                let verb = VERBS[d[3] as usize % VERBS.len()];
                let object = OBJECTS[d[4] as usize % OBJECTS.len()];
                format!("Option {k}: {verb} {object} [{tag}].")
            }
            Phase::Score => {
                let score = 3 + d[5] % 8;
                format!("Score: {score}\nReason: scripted evaluation {tag}.")
            }
            Phase::Reflect => {
                let by_depth = matches!((self.end_at_depth, request.depth), (Some(e), Some(d)) if d >= e);
                let roll = u16::from_le_bytes([d[6], d[7]]) as f64 / 65536.0;
                if by_depth || roll < self.end_rate {
                    "<end>".to_string()
                } else {
                    let object = OBJECTS[d[8] as usize % OBJECTS.len()];
                    format!("Next, consider {object}.")
                }
            }
            Phase::Code => {
                let steps = request
                    .first(SectionLabel::Thinking)
                    .map(|t| t.lines().filter(|l| !l.trim().is_empty()).count())
                    .unwrap_or(0);
                format!(
                    "```python\ndef solution(*args):\n    # follows {steps} reasoning steps\n    return None  # {tag}\n```"
                )
            }
        }
    }
}

/// Deterministic fixture-driven backend for tests and offline runs.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    rules: Vec<FixtureRule>,
    fallback: DefaultRule,
}

impl ScriptedBackend {
    pub fn new(rules: Vec<FixtureRule>, fallback: DefaultRule) -> Self {
        Self { rules, fallback }
    }

    /// Only the synthesized fallback answers.
    pub fn synthetic(seed: u64) -> Self {
        Self::new(Vec::new(), DefaultRule { seed, ..DefaultRule::default() })
    }

    pub fn with_fallback(mut self, fallback: DefaultRule) -> Self {
        self.fallback = fallback;
        self
    }

    /// Reads a line-delimited fixture file of [`FixtureRule`] records.
    pub fn load_rules(path: &Path) -> Result<Vec<FixtureRule>, BackendError> {
        read_jsonl(path).map_err(|e| BackendError::Config(e.to_string()))
    }

    pub fn from_file(path: &Path, fallback: DefaultRule) -> Result<Self, BackendError> {
        Ok(Self::new(Self::load_rules(path)?, fallback))
    }
}

impl ChatBackend for ScriptedBackend {
    fn name(&self) -> String {
        "scripted".to_string()
    }

    fn complete(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        let fp = request.fingerprint();
        let keyed = self
            .rules
            .iter()
            .find(|r| r.fingerprint.as_deref() == Some(fp.as_str()));
        let rule = keyed.or_else(|| {
            self.rules
                .iter()
                .find(|r| r.fingerprint.is_none() && r.matches(request, &fp))
        });
        match rule {
            Some(r) if r.unavailable => Err(BackendError::Unavailable("scripted outage".into())),
            Some(r) => Ok(r.response.clone()),
            None => Ok(self.fallback.answer(request, &fp)),
        }
    }
}
