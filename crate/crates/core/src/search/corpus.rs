use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{info, warn};

use super::{SearchEngine, SearchError, SearchOutcome};
use crate::corpus::QuestionItem;

pub const CHECKPOINT_SCHEMA: &str = "reasoning-mcts/outcome/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Ok,
    /// Reasoning found, code conversion failed.
    Partial,
    Failed,
}

/// One line of the outcome checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub schema: String,
    pub question_id: String,
    pub status: RecordStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<SearchOutcome>,
}

impl CheckpointRecord {
    pub fn from_result(question: &QuestionItem, result: Result<SearchOutcome, SearchError>) -> Self {
        let (status, error, outcome) = match result {
            Ok(o) => (RecordStatus::Ok, None, Some(o)),
            Err(SearchError::PartialOutcome(o)) => {
                let reason = o.summary.termination.to_string();
                (RecordStatus::Partial, Some(reason), Some(*o))
            }
            Err(e) => (RecordStatus::Failed, Some(e.to_string()), None),
        };
        Self {
            schema: CHECKPOINT_SCHEMA.to_string(),
            question_id: question.id.clone(),
            status,
            error,
            outcome,
        }
    }

    pub fn succeeded(&self) -> Option<&SearchOutcome> {
        match self.status {
            RecordStatus::Ok => self.outcome.as_ref(),
            _ => None,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("checkpoint record serializes")
    }
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint {path} is corrupt at line {line}: {message}")]
    CheckpointCorrupt { path: String, line: usize, message: String },
}

/// Results of a corpus run, in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusReport {
    pub records: Vec<CheckpointRecord>,
    /// Searches actually executed by this run (excludes resumed records).
    pub executed: usize,
    pub resumed: usize,
}

impl CorpusReport {
    pub fn successes(&self) -> impl Iterator<Item = &SearchOutcome> {
        self.records.iter().filter_map(CheckpointRecord::succeeded)
    }

    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.status != RecordStatus::Ok).count()
    }
}

/// Reads every record of an existing checkpoint. A final line cut off by a
/// crash (no trailing newline, not parsable) is dropped and the file truncated
/// to the last complete record.
pub fn load_checkpoint(path: &Path) -> Result<Vec<CheckpointRecord>, CheckpointError> {
    let name = path.display().to_string();
    let io = |source| CheckpointError::Io { path: name.clone(), source };
    if !path.exists() {
        return Ok(Vec::new());
    }
    let raw = fs::read_to_string(path).map_err(io)?;
    let mut records = Vec::new();
    let mut valid_len = 0usize;
    let mut offset = 0usize;
    for (idx, line) in raw.split_inclusive('\n').enumerate() {
        offset += line.len();
        let complete = line.ends_with('\n');
        let text = line.trim();
        if text.is_empty() {
            valid_len = offset;
            continue;
        }
        match serde_json::from_str::<CheckpointRecord>(text) {
            Ok(rec) if rec.schema == CHECKPOINT_SCHEMA => {
                records.push(rec);
                valid_len = offset;
            }
            Ok(rec) => {
                return Err(CheckpointError::CheckpointCorrupt {
                    path: name,
                    line: idx + 1,
                    message: format!("unknown schema {}", rec.schema),
                })
            }
            Err(_) if !complete => {
                warn!(path = %name, "dropping truncated final checkpoint line");
                let f = OpenOptions::new().write(true).open(path).map_err(io)?;
                f.set_len(valid_len as u64).map_err(io)?;
            }
            Err(e) => {
                return Err(CheckpointError::CheckpointCorrupt {
                    path: name,
                    line: idx + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(records)
}

impl SearchEngine {
    /// Searches every question not already present in the checkpoint, with at
    /// most `parallelism` searches in flight. Records are appended to the
    /// checkpoint in input order, so the file does not depend on scheduling.
    pub fn run_corpus(
        &self,
        questions: &[QuestionItem],
        parallelism: usize,
        checkpoint: &Path,
    ) -> Result<CorpusReport, CheckpointError> {
        let name = checkpoint.display().to_string();
        let io = |source| CheckpointError::Io { path: name.clone(), source };
        let existing: HashMap<String, CheckpointRecord> = load_checkpoint(checkpoint)?
            .into_iter()
            .map(|r| (r.question_id.clone(), r))
            .collect();
        let pending: Vec<(usize, &QuestionItem)> = questions
            .iter()
            .enumerate()
            .filter(|(_, q)| !existing.contains_key(&q.id))
            .collect();
        let resumed = questions.len() - pending.len();
        if resumed > 0 {
            info!(resumed, pending = pending.len(), "resuming from checkpoint");
        }
        if let Some(dir) = checkpoint.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io)?;
        }
        let mut file = OpenOptions::new().create(true).append(true).open(checkpoint).map_err(io)?;

        let next = AtomicUsize::new(0);
        let workers = parallelism.max(1).min(pending.len().max(1));
        let mut fresh: HashMap<String, CheckpointRecord> = HashMap::new();
        let mut write_err = None;
        thread::scope(|scope| {
            let (tx, rx) = mpsc::channel::<(usize, CheckpointRecord)>();
            for _ in 0..workers {
                let tx = tx.clone();
                let (next, pending) = (&next, &pending);
                scope.spawn(move || loop {
                    let slot = next.fetch_add(1, Ordering::SeqCst);
                    let Some((_, question)) = pending.get(slot) else { break };
                    let started = Instant::now();
                    let result = self.run(question);
                    let record = CheckpointRecord::from_result(question, result);
                    let calls = record.outcome.as_ref().map_or(0, |o| o.summary.backend_calls);
                    info!(
                        question = %question.id,
                        status = ?record.status,
                        elapsed_ms = started.elapsed().as_millis() as u64,
                        backend_calls = calls,
                        "search finished"
                    );
                    if tx.send((slot, record)).is_err() {
                        break;
                    }
                });
            }
            drop(tx);
            // Single writer: commit in input order as soon as a prefix is complete.
            let mut buffered: BTreeMap<usize, CheckpointRecord> = BTreeMap::new();
            let mut cursor = 0usize;
            for (slot, record) in rx {
                buffered.insert(slot, record);
                while let Some(record) = buffered.remove(&cursor) {
                    if write_err.is_none() {
                        let res = writeln!(file, "{}", record.to_line()).and_then(|_| file.flush());
                        if let Err(e) = res {
                            write_err = Some(e);
                        }
                    }
                    fresh.insert(record.question_id.clone(), record);
                    cursor += 1;
                }
            }
        });
        if let Some(e) = write_err {
            return Err(io(e));
        }
        let executed = fresh.len();
        let mut existing = existing;
        let records = questions
            .iter()
            .map(|q| {
                fresh
                    .remove(&q.id)
                    .or_else(|| existing.remove(&q.id))
                    .expect("every question has a record")
            })
            .collect();
        Ok(CorpusReport { records, executed, resumed })
    }
}

/// Every outcome stored in a checkpoint file, successful or not.
pub fn read_outcomes(path: &Path) -> Result<Vec<CheckpointRecord>, CheckpointError> {
    File::open(path).map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })?;
    load_checkpoint(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader};
    use crate::backend::{DefaultRule, FixtureRule, ScriptedBackend};
    use crate::tree::SearchConfig;
    use std::sync::Arc;

    fn count_lines(path: &Path) -> usize {
        File::open(path).map(|f| BufReader::new(f).lines().count()).unwrap_or(0)
    }

    fn questions(n: usize) -> Vec<QuestionItem> {
        (0..n)
            .map(|i| QuestionItem::new(format!("q{i:02}"), format!("Question number {i}: compute something {i}.")))
            .collect()
    }

    fn engine(rules: Vec<FixtureRule>) -> SearchEngine {
        let backend = ScriptedBackend::new(rules, DefaultRule { seed: 5, end_at_depth: None, end_rate: 0.25 });
        SearchEngine::new(SearchConfig::default(), Arc::new(backend))
    }

    #[test]
    fn resume_skips_persisted() {
        let dir = tempfile::tempdir().unwrap();
        let cp = dir.path().join("out/cp.jsonl");
        let qs = questions(10);
        let e = engine(vec![]);
        let first = e.run_corpus(&qs[..6], 2, &cp).unwrap();
        assert_eq!(first.executed, 6);
        let second = e.run_corpus(&qs, 3, &cp).unwrap();
        assert_eq!((second.executed, second.resumed), (4, 6));
        assert_eq!(count_lines(&cp), 10);
        let ids: Vec<_> = second.records.iter().map(|r| r.question_id.clone()).collect();
        assert_eq!(ids, qs.iter().map(|q| q.id.clone()).collect::<Vec<_>>());
        let third = e.run_corpus(&qs, 3, &cp).unwrap();
        assert_eq!(third.executed, 0);
    }

    #[test]
    fn parallelism_does_not_change_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let qs = questions(8);
        let e = engine(vec![]);
        let a = dir.path().join("a.jsonl");
        let b = dir.path().join("b.jsonl");
        e.run_corpus(&qs, 1, &a).unwrap();
        e.run_corpus(&qs, 4, &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }

    #[test]
    fn failures_are_isolated() {
        let dir = tempfile::tempdir().unwrap();
        let qs = questions(10);
        let e = engine(vec![FixtureRule::down().containing("Question number 3:")]);
        let r = e.run_corpus(&qs, 4, &dir.path().join("cp.jsonl")).unwrap();
        assert_eq!(r.successes().count(), 9);
        assert_eq!(r.failures(), 1);
        assert_eq!(r.records[3].status, RecordStatus::Failed);
    }

    #[test]
    fn truncated_tail_is_dropped_but_garbage_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let cp = dir.path().join("cp.jsonl");
        let e = engine(vec![]);
        e.run_corpus(&questions(2), 1, &cp).unwrap();
        let mut f = OpenOptions::new().append(true).open(&cp).unwrap();
        write!(f, "{{\"schema\":\"reasoning-mcts/outc").unwrap();
        drop(f);
        assert_eq!(load_checkpoint(&cp).unwrap().len(), 2);
        assert!(fs::read_to_string(&cp).unwrap().ends_with("}\n"));

        fs::write(&cp, "not json\n").unwrap();
        assert!(matches!(load_checkpoint(&cp), Err(CheckpointError::CheckpointCorrupt { line: 1, .. })));
    }
}
