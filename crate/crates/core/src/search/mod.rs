//! The per-question search loop and the corpus runner.
//!
//! One iteration is select, expand, evaluate and reflect, backpropagate. The
//! loop stops when a freshly evaluated node reflects with the end marker or
//! when the iteration limit is reached. The chosen path is then turned into
//! code.

mod corpus;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, warn};

use crate::backend::{
    BackendDescriptor, BackendError, ChatBackend, ModelSettings, ReasoningModel, ReflectionResult,
    TranscriptEntry,
};
use crate::corpus::QuestionItem;
use crate::tree::{
    backpropagate, extract_thinking, select_leaf, Reflection, SearchConfig, SearchTree, Termination,
    ThinkingRecord, TreeCheckpoint, TreeError,
};

pub use corpus::{
    load_checkpoint, read_outcomes, CheckpointError, CheckpointRecord, CorpusReport, RecordStatus,
    CHECKPOINT_SCHEMA,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeSummary {
    pub iterations: usize,
    pub node_count: usize,
    pub termination: Termination,
    pub backend_calls: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub question: QuestionItem,
    pub thinking: ThinkingRecord,
    pub code: String,
    pub code_fenced: bool,
    pub backend: String,
    pub summary: TreeSummary,
    pub tree: TreeCheckpoint,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transcript: Vec<TranscriptEntry>,
}

impl SearchOutcome {
    pub fn is_success(&self) -> bool {
        !self.summary.termination.is_failure() && !self.code.trim().is_empty()
    }
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid question {0}: empty statement")]
    InvalidQuestion(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("search for {question_id} failed: {source}")]
    SearchFailed {
        question_id: String,
        #[source]
        source: BackendError,
    },
    #[error("search for {question_id} produced no reasoning: {source}")]
    Tree {
        question_id: String,
        #[source]
        source: TreeError,
    },
    /// Reasoning was found but could not be turned into code.
    #[error("code conversion failed for {}: {}", .0.question.id, .0.summary.termination)]
    PartialOutcome(Box<SearchOutcome>),
}

impl SearchError {
    pub fn partial(&self) -> Option<&SearchOutcome> {
        match self {
            SearchError::PartialOutcome(o) => Some(o),
            _ => None,
        }
    }
}

/// Runs searches against one shared backend.
pub struct SearchEngine {
    config: SearchConfig,
    backend: Arc<dyn ChatBackend>,
    settings: ModelSettings,
}

impl SearchEngine {
    pub fn new(config: SearchConfig, backend: Arc<dyn ChatBackend>) -> Self {
        Self { config, backend, settings: ModelSettings::default() }
    }

    pub fn from_descriptor(config: SearchConfig, descriptor: &BackendDescriptor) -> Result<Self, SearchError> {
        config.validate().map_err(SearchError::Config)?;
        let backend = descriptor
            .build(config.seed)
            .map_err(|e| SearchError::Config(e.to_string()))?;
        Ok(Self::new(config, backend))
    }

    pub fn with_settings(mut self, settings: ModelSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn config(&self) -> &SearchConfig {
        &self.config
    }

    pub fn run(&self, question: &QuestionItem) -> Result<SearchOutcome, SearchError> {
        if question.statement.trim().is_empty() {
            return Err(SearchError::InvalidQuestion(question.id.clone()));
        }
        self.config.validate().map_err(SearchError::Config)?;
        let mut model = ReasoningModel::new(self.backend.clone(), self.settings.clone());
        let failed = |source| SearchError::SearchFailed { question_id: question.id.clone(), source };
        let tree_err = |source| SearchError::Tree { question_id: question.id.clone(), source };

        let mut tree = SearchTree::new(&question.statement);
        let mut termination = Termination::IterationLimit;
        while tree.iterations_run < self.config.iteration_limit {
            let leaf = select_leaf(&mut tree, &self.config).map_err(tree_err)?;
            tree.iterations_run += 1;
            let parent = tree.node(leaf).map_err(tree_err)?.clone();
            if parent.is_terminal() {
                termination = Termination::EndTagReached;
                break;
            }
            let state = parent.child_state();
            let guidance = parent.reflection.as_ref().and_then(Reflection::guidance);

            let mut fresh = Vec::with_capacity(self.config.branching);
            for _ in 0..self.config.branching {
                let siblings = tree.child_actions(leaf).map_err(tree_err)?;
                match model.generate_step(&state, &siblings, guidance, parent.depth + 1, &self.config) {
                    Ok(step) => fresh.push(tree.add_child(leaf, &step).map_err(tree_err)?),
                    Err(e @ BackendError::Unavailable(_)) => return Err(failed(e)),
                    Err(e) => {
                        warn!(question = %question.id, node = %leaf, error = %e, "expansion stopped early");
                        break;
                    }
                }
            }

            for id in &fresh {
                let node = tree.node(*id).map_err(tree_err)?;
                let (state, action, depth) = (node.state.clone(), node.action.clone().unwrap_or_default(), node.depth);
                let score = model.score_step(&state, &action, depth).map_err(failed)?;
                tree.set_reward(*id, score.normalized()).map_err(tree_err)?;
                let reflection = match model.reflect(&state, &action, depth).map_err(failed)? {
                    ReflectionResult::End => Reflection::End,
                    ReflectionResult::Guidance(text) => Reflection::Guidance(text),
                };
                tree.set_reflection(*id, reflection).map_err(tree_err)?;
            }
            if !fresh.is_empty() {
                backpropagate(&mut tree, leaf, self.config.alpha).map_err(tree_err)?;
            }
            tree.validate().map_err(tree_err)?;
            debug!(
                question = %question.id,
                iteration = tree.iterations_run,
                expanded = %leaf,
                children = fresh.len(),
                "iteration done"
            );
            let ended = fresh
                .iter()
                .any(|id| tree.nodes[id.0].is_terminal());
            if ended {
                termination = Termination::EndTagReached;
                break;
            }
        }
        tree.terminated = Some(termination);

        let thinking = extract_thinking(&tree).map_err(tree_err)?;
        let code = model.thinking_to_code(&question.statement, &thinking);
        let backend = model.backend_name();
        let calls = model.calls();
        let transcript = model.take_transcript();
        let mut outcome = SearchOutcome {
            question: question.clone(),
            thinking,
            code: String::new(),
            code_fenced: false,
            backend,
            summary: TreeSummary {
                iterations: tree.iterations_run,
                node_count: tree.len(),
                termination: tree.terminated.clone().unwrap_or(Termination::IterationLimit),
                backend_calls: calls,
            },
            tree: TreeCheckpoint::new(question.id.clone(), self.config.clone(), tree),
            transcript,
        };
        match code {
            Ok(c) => {
                outcome.code = c.code;
                outcome.code_fenced = c.fenced;
                Ok(outcome)
            }
            Err(e) => {
                let failure = Termination::Failure(format!("code conversion: {e}"));
                outcome.summary.termination = failure.clone();
                outcome.tree.tree.terminated = Some(failure);
                Err(SearchError::PartialOutcome(Box::new(outcome)))
            }
        }
    }
}

/// One-shot search with a backend built from its descriptor.
pub fn run_search(
    question: &QuestionItem,
    config: &SearchConfig,
    backend: &BackendDescriptor,
) -> Result<SearchOutcome, SearchError> {
    SearchEngine::from_descriptor(config.clone(), backend)?.run(question)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{DefaultRule, FixtureRule, Phase, ScriptedBackend};
    use crate::data::strip::contains_fence;

    fn engine(rules: Vec<FixtureRule>, fallback: DefaultRule) -> SearchEngine {
        SearchEngine::new(SearchConfig::default(), Arc::new(ScriptedBackend::new(rules, fallback)))
    }

    fn q() -> QuestionItem {
        QuestionItem::new("q1", "Return the largest element of a list of integers.")
    }

    #[test]
    fn end_on_second_iteration() {
        let e = engine(vec![], DefaultRule { seed: 1, end_at_depth: Some(2), end_rate: 0.0 });
        let o = e.run(&q()).unwrap();
        assert_eq!(o.summary.termination, Termination::EndTagReached);
        assert_eq!(o.summary.iterations, 2);
        assert_eq!(o.summary.node_count, 1 + 2 * 3);
        assert_eq!(o.thinking.len(), 2);
        assert!(o.code.contains("def solution"));
        assert!(o.code_fenced);
    }

    #[test]
    fn runs_to_iteration_limit() {
        let e = engine(vec![], DefaultRule { seed: 2, ..Default::default() });
        let o = e.run(&q()).unwrap();
        assert_eq!(o.summary.termination, Termination::IterationLimit);
        assert_eq!(o.summary.iterations, 5);
        assert_eq!(o.summary.node_count, 1 + 5 * 3);
        assert!(!o.thinking.is_empty() && o.thinking.len() <= 5);
        assert!(o.thinking.steps.iter().all(|s| !contains_fence(s)));
        o.tree.tree.validate().unwrap();
        assert_eq!(o.tree.tree.root_node().visits, 5);
    }

    #[test]
    fn outage_fails_fast() {
        let e = engine(vec![FixtureRule::down()], DefaultRule::default());
        assert!(matches!(e.run(&q()), Err(SearchError::SearchFailed { .. })));
    }

    #[test]
    fn code_failure_is_partial() {
        let e = engine(
            vec![FixtureRule::respond("   ").phase(Phase::Code)],
            DefaultRule { seed: 3, end_at_depth: Some(1), end_rate: 0.0 },
        );
        let err = e.run(&q()).unwrap_err();
        let partial = err.partial().expect("partial outcome");
        assert!(partial.code.is_empty());
        assert!(partial.summary.termination.is_failure());
        assert_eq!(partial.thinking.len(), 1);
    }

    #[test]
    fn duplicate_exhaustion_keeps_earlier_children() {
        let e = engine(
            vec![FixtureRule::respond("Scan the list once.").phase(Phase::Expand)],
            DefaultRule { seed: 4, ..Default::default() },
        );
        let o = e.run(&q()).unwrap();
        // Every expansion accepts exactly one child before duplicates exhaust.
        assert_eq!(o.summary.node_count, 1 + 5);
        assert_eq!(o.thinking.len(), 5);
    }

    #[test]
    fn empty_question_rejected() {
        let e = engine(vec![], DefaultRule::default());
        assert!(matches!(e.run(&QuestionItem::new("x", "  ")), Err(SearchError::InvalidQuestion(_))));
    }

    #[test]
    fn deterministic_across_runs() {
        let e = engine(vec![], DefaultRule { seed: 9, end_at_depth: None, end_rate: 0.2 });
        let a = serde_json::to_string(&e.run(&q()).unwrap()).unwrap();
        let b = serde_json::to_string(&e.run(&q()).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
