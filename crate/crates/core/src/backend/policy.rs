use std::sync::{Arc, LazyLock};

use regex::Regex;
use serde::{Deserialize, Serialize};
use tracing::warn;

use super::prompts::render;
use super::{BackendError, ChatBackend, GenerationRequest, Phase, SectionLabel};
use crate::data::strip::{first_fenced_block, strip_code};
use crate::tree::{is_duplicate_step, SearchConfig, ThinkingRecord};

/// Rubric principle that determined a score. Each principle owns a score band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Principle {
    SingleStepCorrectness,
    SolutionCoherence,
    SolutionCompleteness,
    SolutionCorrectness,
    FullScore,
}

impl Principle {
    /// The band a score falls in: 0-3, 4-5, 6-7, 8-9, 10.
    pub fn for_score(score: u8) -> Self {
        match score {
            0..=3 => Principle::SingleStepCorrectness,
            4..=5 => Principle::SolutionCoherence,
            6..=7 => Principle::SolutionCompleteness,
            8..=9 => Principle::SolutionCorrectness,
            _ => Principle::FullScore,
        }
    }

    pub fn range(self) -> (u8, u8) {
        match self {
            Principle::SingleStepCorrectness => (0, 3),
            Principle::SolutionCoherence => (4, 5),
            Principle::SolutionCompleteness => (6, 7),
            Principle::SolutionCorrectness => (8, 9),
            Principle::FullScore => (10, 10),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepScore {
    pub raw_score: u8,
    pub principle: Principle,
    pub rationale: String,
    /// Set when no score could be parsed and the neutral fallback was used.
    pub fallback: bool,
}

impl StepScore {
    pub const FALLBACK: u8 = 5;

    pub fn normalized(&self) -> f64 {
        f64::from(self.raw_score) / 10.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "text", rename_all = "snake_case")]
pub enum ReflectionResult {
    End,
    Guidance(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeConversion {
    pub code: String,
    /// False when the response held no fenced block and was taken whole.
    pub fenced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub phase: Phase,
    pub attempt: u32,
    pub fingerprint: String,
    pub prompt: String,
    pub response: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub end_marker: String,
    /// Attempts at obtaining a parsable score before falling back.
    pub max_attempts: usize,
    /// Sampling temperature for scoring, reflection and code conversion.
    pub eval_temperature: f64,
    pub step_max_tokens: u32,
    pub eval_max_tokens: u32,
    pub code_max_tokens: u32,
    pub record_transcript: bool,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            end_marker: "<end>".to_string(),
            max_attempts: 3,
            eval_temperature: 0.0,
            step_max_tokens: 256,
            eval_max_tokens: 256,
            code_max_tokens: 1024,
            record_transcript: true,
        }
    }
}

static SCORE_TOKEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(\d+)\b").unwrap());

/// First standalone integer in `0..=10`, with its rubric band.
pub fn parse_score(response: &str) -> Option<StepScore> {
    let score = SCORE_TOKEN
        .captures_iter(response)
        .filter_map(|c| c[1].parse::<u32>().ok())
        .find(|v| *v <= 10)? as u8;
    Some(StepScore {
        raw_score: score,
        principle: Principle::for_score(score),
        rationale: response.trim().to_string(),
        fallback: false,
    })
}

/// Phase-level view of a backend for one search. Counts calls and keeps the
/// prompt/response transcript.
pub struct ReasoningModel {
    backend: Arc<dyn ChatBackend>,
    settings: ModelSettings,
    calls: usize,
    transcript: Vec<TranscriptEntry>,
}

impl ReasoningModel {
    pub fn new(backend: Arc<dyn ChatBackend>, settings: ModelSettings) -> Self {
        Self { backend, settings, calls: 0, transcript: Vec::new() }
    }

    pub fn backend_name(&self) -> String {
        self.backend.name()
    }

    pub fn settings(&self) -> &ModelSettings {
        &self.settings
    }

    pub fn calls(&self) -> usize {
        self.calls
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }

    pub fn take_transcript(&mut self) -> Vec<TranscriptEntry> {
        std::mem::take(&mut self.transcript)
    }

    fn call(&mut self, request: &GenerationRequest) -> Result<String, BackendError> {
        self.calls += 1;
        let result = self.backend.complete(request);
        if self.settings.record_transcript {
            let (response, error) = match &result {
                Ok(text) => (Some(text.clone()), None),
                Err(e) => (None, Some(e.to_string())),
            };
            self.transcript.push(TranscriptEntry {
                phase: request.phase,
                attempt: request.attempt,
                fingerprint: request.fingerprint(),
                prompt: render(request, &self.settings.end_marker).user,
                response,
                error,
            });
        }
        result
    }

    fn eval_request(&self, phase: Phase, max_tokens: u32) -> GenerationRequest {
        let mut req = GenerationRequest::new(phase);
        req.temperature = self.settings.eval_temperature;
        req.max_tokens = max_tokens;
        req
    }

    /// Proposes one new reasoning step below `state`, different from every
    /// sibling after normalization. Fenced code in the response is removed.
    pub fn generate_step(
        &mut self,
        state: &str,
        siblings: &[String],
        reflection: Option<&str>,
        depth: usize,
        config: &SearchConfig,
    ) -> Result<String, BackendError> {
        let mut base = GenerationRequest::new(Phase::Expand).section(SectionLabel::State, state);
        for s in siblings {
            base = base.section(SectionLabel::Sibling, s.clone());
        }
        if let Some(r) = reflection.filter(|r| !r.trim().is_empty()) {
            base = base.section(SectionLabel::Reflection, r);
        }
        base.temperature = config.temperature;
        base.top_p = config.top_p;
        base.max_tokens = self.settings.step_max_tokens;
        base.depth = Some(depth);
        for attempt in 0..config.max_retries {
            let mut req = base.clone();
            req.attempt = attempt as u32;
            let raw = self.call(&req)?;
            let step = strip_code(&raw);
            if step.is_empty() {
                return Err(BackendError::EmptyCompletion);
            }
            if !is_duplicate_step(&step, siblings) {
                return Ok(step);
            }
        }
        Err(BackendError::DuplicateExhausted { attempts: config.max_retries })
    }

    /// Scores `action` taken from `state` with the progressive rubric.
    pub fn score_step(&mut self, state: &str, action: &str, depth: usize) -> Result<StepScore, BackendError> {
        let mut last = String::new();
        for attempt in 0..self.settings.max_attempts.max(1) {
            let mut req = self
                .eval_request(Phase::Score, self.settings.eval_max_tokens)
                .section(SectionLabel::State, state)
                .section(SectionLabel::Step, action);
            req.attempt = attempt as u32;
            req.depth = Some(depth);
            let raw = self.call(&req)?;
            if let Some(score) = parse_score(&raw) {
                return Ok(score);
            }
            last = raw;
        }
        warn!(response = %last, "no parsable score, using neutral fallback");
        Ok(StepScore {
            raw_score: StepScore::FALLBACK,
            principle: Principle::for_score(StepScore::FALLBACK),
            rationale: last,
            fallback: true,
        })
    }

    /// Asks for guidance on the next step, or the end marker when solved.
    pub fn reflect(&mut self, state: &str, action: &str, depth: usize) -> Result<ReflectionResult, BackendError> {
        let mut req = self
            .eval_request(Phase::Reflect, self.settings.eval_max_tokens)
            .section(SectionLabel::State, state)
            .section(SectionLabel::Step, action);
        req.depth = Some(depth);
        let raw = self.call(&req)?;
        let marker = self.settings.end_marker.to_lowercase();
        if raw.to_lowercase().contains(&marker) {
            return Ok(ReflectionResult::End);
        }
        let text = strip_code(&raw);
        if text.is_empty() {
            warn!("empty reflection, continuing without guidance");
        }
        Ok(ReflectionResult::Guidance(text))
    }

    /// Turns the reasoning into code: the first fenced block of the response,
    /// or the whole trimmed response if it has none.
    pub fn thinking_to_code(&mut self, question: &str, thinking: &ThinkingRecord) -> Result<CodeConversion, BackendError> {
        let req = self
            .eval_request(Phase::Code, self.settings.code_max_tokens)
            .section(SectionLabel::Question, question)
            .section(SectionLabel::Thinking, thinking.numbered());
        let raw = self.call(&req)?;
        let conversion = match first_fenced_block(&raw) {
            Some(code) => CodeConversion { code, fenced: true },
            None => CodeConversion { code: raw.trim().to_string(), fenced: false },
        };
        if conversion.code.trim().is_empty() {
            return Err(BackendError::EmptyCompletion);
        }
        Ok(conversion)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{DefaultRule, FixtureRule, ScriptedBackend};
    use crate::tree::Termination;

    fn model(rules: Vec<FixtureRule>) -> ReasoningModel {
        ReasoningModel::new(
            Arc::new(ScriptedBackend::new(rules, DefaultRule::default())),
            ModelSettings::default(),
        )
    }

    fn thinking(steps: &[&str]) -> ThinkingRecord {
        ThinkingRecord {
            steps: steps.iter().map(|s| s.to_string()).collect(),
            node_path: vec![],
            path_rewards: vec![],
            termination: Termination::EndTagReached,
        }
    }

    #[test]
    fn step_strips_code() {
        let mut m = model(vec![FixtureRule::respond("Use two pointers.\n```\nfor i in ...\n```")]);
        let step = m.generate_step("Q", &[], None, 1, &SearchConfig::default()).unwrap();
        assert_eq!(step, "Use two pointers.");
    }

    #[test]
    fn duplicates_exhaust_after_max_retries() {
        let mut m = model(vec![FixtureRule::respond("Sort the array.").phase(Phase::Expand)]);
        let siblings = vec!["sort the array".to_string()];
        let err = m.generate_step("Q", &siblings, None, 1, &SearchConfig::default()).unwrap_err();
        assert_eq!(err, BackendError::DuplicateExhausted { attempts: 5 });
        assert_eq!(m.calls(), 5);
    }

    #[test]
    fn duplicate_retry_can_recover() {
        let mut m = model(vec![
            FixtureRule { attempt: Some(0), ..FixtureRule::respond("sort the array") },
            FixtureRule::respond("binary search the answer"),
        ]);
        let siblings = vec!["Sort the array.".to_string()];
        let step = m.generate_step("Q", &siblings, None, 1, &SearchConfig::default()).unwrap();
        assert_eq!(step, "binary search the answer");
        assert_eq!(m.calls(), 2);
    }

    #[test]
    fn empty_step_is_an_error() {
        let mut m = model(vec![FixtureRule::respond("```\ncode only\n```")]);
        assert_eq!(
            m.generate_step("Q", &[], None, 1, &SearchConfig::default()),
            Err(BackendError::EmptyCompletion)
        );
    }

    #[test]
    fn score_bands() {
        let mut m = model(vec![
            FixtureRule::respond("Score: 2\nPrinciple: single-step correctness").containing("contradicts previous step"),
            FixtureRule::respond("Score: 10\nPrinciple: full score").containing("complete and correct"),
        ]);
        let s = m.score_step("Q", "this contradicts previous step", 1).unwrap();
        assert!(s.raw_score <= 3);
        assert_eq!(s.principle, Principle::SingleStepCorrectness);
        let s = m.score_step("Q", "complete and correct", 1).unwrap();
        assert_eq!((s.raw_score, s.principle), (10, Principle::FullScore));
        assert_eq!(s.normalized(), 1.0);
    }

    #[test]
    fn unparsable_score_falls_back() {
        let mut m = model(vec![FixtureRule::respond("great job!")]);
        let s = m.score_step("Q", "a", 1).unwrap();
        assert_eq!((s.raw_score, s.principle, s.fallback), (5, Principle::SolutionCoherence, true));
        assert_eq!(m.calls(), 3);
    }

    #[test]
    fn score_parsing_rules() {
        assert_eq!(parse_score("Score: 7/10").unwrap().raw_score, 7);
        assert_eq!(parse_score("I give 42 points, no: 8").unwrap().raw_score, 8);
        assert!(parse_score("x7 score").is_none());
        assert!(parse_score("none").is_none());
    }

    #[test]
    fn reflection_marker() {
        let mut m = model(vec![
            FixtureRule::respond("<end>").containing("s1"),
            FixtureRule::respond("Almost done. <END>").containing("s2"),
            FixtureRule::respond("Next, handle the empty-array edge case.").containing("s3"),
            FixtureRule::respond("").containing("s4"),
        ]);
        assert_eq!(m.reflect("Q", "s1", 1).unwrap(), ReflectionResult::End);
        assert_eq!(m.reflect("Q", "s2", 1).unwrap(), ReflectionResult::End);
        assert_eq!(
            m.reflect("Q", "s3", 1).unwrap(),
            ReflectionResult::Guidance("Next, handle the empty-array edge case.".into())
        );
        assert_eq!(m.reflect("Q", "s4", 1).unwrap(), ReflectionResult::Guidance(String::new()));
    }

    #[test]
    fn code_conversion_rules() {
        let mut m = model(vec![
            FixtureRule::respond("Here:\n```python\ndef f():\n    return 1\n```\n```\nsecond\n```").containing("Q1"),
            FixtureRule::respond("  return the sum  ").containing("Q2"),
        ]);
        let c = m.thinking_to_code("Q1", &thinking(&["a", "b"])).unwrap();
        assert_eq!(c, CodeConversion { code: "def f():\n    return 1".into(), fenced: true });
        let c = m.thinking_to_code("Q2", &thinking(&["a"])).unwrap();
        assert_eq!(c, CodeConversion { code: "return the sum".into(), fenced: false });
    }

    #[test]
    fn transcript_records_each_call() {
        let mut m = model(vec![FixtureRule::respond("Score: 9")]);
        m.score_step("Q", "a", 1).unwrap();
        assert_eq!(m.transcript().len(), 1);
        assert_eq!(m.transcript()[0].phase, Phase::Score);
        assert!(m.transcript()[0].prompt.contains("Proposed next step:\na"));
    }
}
