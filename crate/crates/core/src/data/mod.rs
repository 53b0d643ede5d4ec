//! Corpus engineering around the search: decontamination, code stripping,
//! supervised fine-tuning file assembly and dataset statistics.

pub mod ngram;
pub mod strip;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::search::SearchOutcome;
use crate::tree::Termination;

pub use ngram::{decontaminate, ngram_similarity, ContaminationReport, Removal, DEFAULT_NGRAM, DEFAULT_THRESHOLD};
pub use strip::strip_code;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("no successful outcomes to assemble")]
    EmptyDataset,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleMeta {
    pub question_id: String,
    pub termination: Termination,
    pub path_rewards: Vec<f64>,
    pub backend: String,
    pub steps: usize,
}

/// A (question, thinking, code) record, the unit of the emitted dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTriple {
    pub question: String,
    /// Numbered reasoning steps, one per line.
    pub thinking: String,
    pub code: String,
    pub meta: TripleMeta,
}

impl TrainingTriple {
    /// `None` for failed searches or outcomes missing any of the three texts.
    pub fn from_outcome(outcome: &SearchOutcome) -> Option<Self> {
        if !outcome.is_success() {
            return None;
        }
        let steps: Vec<String> = outcome
            .thinking
            .steps
            .iter()
            .map(|s| strip_code(s))
            .filter(|s| !s.is_empty())
            .collect();
        if steps.is_empty() || outcome.question.statement.trim().is_empty() {
            return None;
        }
        let thinking = steps
            .iter()
            .enumerate()
            .map(|(i, s)| format!("{}. {}", i + 1, s))
            .collect::<Vec<_>>()
            .join("\n");
        Some(Self {
            question: outcome.question.statement.clone(),
            thinking,
            code: outcome.code.trim_matches('\n').to_string(),
            meta: TripleMeta {
                question_id: outcome.question.id.clone(),
                termination: outcome.summary.termination.clone(),
                path_rewards: outcome.thinking.path_rewards.clone(),
                backend: outcome.backend.clone(),
                steps: steps.len(),
            },
        })
    }

    /// Thinking followed by the code in a single fenced block.
    pub fn output(&self) -> String {
        format!("{}\n\n```python\n{}\n```", self.thinking, self.code)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SftFormat {
    /// `{"id", "input", "output"}`
    #[default]
    InstructionOutput,
    /// `{"id", "messages": [user, assistant]}`
    ChatMessages,
}

impl std::str::FromStr for SftFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "instruction_output" | "instruction-output" => Ok(SftFormat::InstructionOutput),
            "chat_messages" | "chat-messages" | "chat" => Ok(SftFormat::ChatMessages),
            other => Err(format!("unknown SFT format {other:?}")),
        }
    }
}

pub fn sft_record(triple: &TrainingTriple, format: SftFormat) -> serde_json::Value {
    match format {
        SftFormat::InstructionOutput => json!({
            "id": triple.meta.question_id,
            "input": triple.question,
            "output": triple.output(),
        }),
        SftFormat::ChatMessages => json!({
            "id": triple.meta.question_id,
            "messages": [
                {"role": "user", "content": triple.question},
                {"role": "assistant", "content": triple.output()},
            ],
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssembleSummary {
    pub written: usize,
    pub excluded_failures: usize,
}

/// Converts outcomes to triples, sorted by question id, dropping failures.
pub fn collect_triples(outcomes: &[SearchOutcome]) -> (Vec<TrainingTriple>, usize) {
    let mut triples: Vec<TrainingTriple> = outcomes.iter().filter_map(TrainingTriple::from_outcome).collect();
    triples.sort_by(|a, b| a.meta.question_id.cmp(&b.meta.question_id));
    let excluded = outcomes.len() - triples.len();
    (triples, excluded)
}

/// Writes the line-delimited SFT file.
pub fn assemble_sft(outcomes: &[SearchOutcome], format: SftFormat, path: &Path) -> Result<AssembleSummary, DataError> {
    let (triples, excluded) = collect_triples(outcomes);
    if triples.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let io = |source| DataError::Io { path: path.display().to_string(), source };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for t in &triples {
        writeln!(w, "{}", sft_record(t, format)).map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(AssembleSummary { written: triples.len(), excluded_failures: excluded })
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LengthPercentiles {
    pub p50: usize,
    pub p90: usize,
    pub p99: usize,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetStats {
    pub triples: usize,
    pub excluded_failures: usize,
    pub step_histogram: BTreeMap<usize, usize>,
    pub termination: BTreeMap<String, usize>,
    pub mean_path_reward: f64,
    /// Whitespace-token lengths of the full output (thinking plus code).
    pub output_tokens: LengthPercentiles,
}

fn nearest_rank(sorted: &[usize], pct: usize) -> usize {
    if sorted.is_empty() {
        return 0;
    }
    let rank = (pct * sorted.len()).div_ceil(100).max(1);
    sorted[rank - 1]
}

pub fn dataset_stats(triples: &[TrainingTriple]) -> DatasetStats {
    let mut stats = DatasetStats { triples: triples.len(), ..DatasetStats::default() };
    if triples.is_empty() {
        return stats;
    }
    let mut lengths = Vec::with_capacity(triples.len());
    let mut reward_sum = 0.0;
    for t in triples {
        *stats.step_histogram.entry(t.meta.steps).or_default() += 1;
        *stats.termination.entry(t.meta.termination.label().to_string()).or_default() += 1;
        let rewards = &t.meta.path_rewards;
        if !rewards.is_empty() {
            reward_sum += rewards.iter().sum::<f64>() / rewards.len() as f64;
        }
        lengths.push(t.output().split_whitespace().count());
    }
    lengths.sort_unstable();
    stats.mean_path_reward = reward_sum / triples.len() as f64;
    stats.output_tokens = LengthPercentiles {
        p50: nearest_rank(&lengths, 50),
        p90: nearest_rank(&lengths, 90),
        p99: nearest_rank(&lengths, 99),
        max: *lengths.last().unwrap_or(&0),
    };
    stats
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triple(id: &str, steps: usize, term: Termination) -> TrainingTriple {
        let thinking = (1..=steps).map(|i| format!("{i}. step {i}")).collect::<Vec<_>>().join("\n");
        TrainingTriple {
            question: format!("question {id}"),
            thinking,
            code: "def f():\n    return 1".into(),
            meta: TripleMeta {
                question_id: id.into(),
                termination: term,
                path_rewards: vec![0.5; steps],
                backend: "scripted".into(),
                steps,
            },
        }
    }

    #[test]
    fn empty_stats_are_zero() {
        assert_eq!(dataset_stats(&[]), DatasetStats::default());
    }

    #[test]
    fn single_triple_histogram() {
        let s = dataset_stats(&[triple("a", 4, Termination::EndTagReached)]);
        assert_eq!(s.step_histogram, BTreeMap::from([(4, 1)]));
        assert_eq!(s.termination["end_tag_reached"], 1);
        assert_eq!(s.mean_path_reward, 0.5);
        assert_eq!(s.output_tokens.p50, s.output_tokens.max);
    }

    #[test]
    fn percentiles_nearest_rank() {
        let v: Vec<usize> = (1..=10).collect();
        assert_eq!(nearest_rank(&v, 50), 5);
        assert_eq!(nearest_rank(&v, 90), 9);
        assert_eq!(nearest_rank(&v, 99), 10);
    }

    #[test]
    fn output_has_one_fence_pair() {
        let t = triple("a", 2, Termination::IterationLimit);
        let out = t.output();
        assert_eq!(strip::count_fenced_blocks(&out), 1);
        assert!(out.starts_with("1. step 1\n2. step 2\n\n```python\n"));
        let chat = sft_record(&t, SftFormat::ChatMessages);
        assert_eq!(chat["messages"][1]["content"], out);
        assert_eq!(sft_record(&t, SftFormat::InstructionOutput)["input"], "question a");
    }
}
