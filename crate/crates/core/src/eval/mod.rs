//! Functional-correctness evaluation of generated code: sandboxed execution,
//! the unbiased pass@k estimator and per-split reports.

pub mod sandbox;
mod task;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use sandbox::{execute_program, self_test, ExecOutcome, SandboxConfig, SandboxError, SelfTestReport};
pub use task::{load_samples, load_tasks, EvalTask};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("invalid arguments: {0}")]
    InvalidArgs(String),
    #[error("task {0} has no difficulty label but the complex split was requested")]
    MissingDifficulty(String),
    #[error("no samples supplied for task {0}")]
    MissingSamples(String),
    #[error("input: {0}")]
    Input(String),
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
}

/// `C(n, k)` when it fits in a `u128`.
fn binomial(n: u64, k: u64) -> Option<u128> {
    let k = k.min(n - k.min(n));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

const EXACT_LIMIT: u128 = 1 << 53;

/// Probability that at least one of `k` samples drawn without replacement
/// from `n` (of which `c` are correct) is correct: `1 - C(n-c, k) / C(n, k)`.
///
/// Evaluated as an exact integer ratio when the binomials are small enough
/// to be represented exactly as `f64`, otherwise with the product
/// `1 - prod_{i=n-c+1}^{n} (1 - k/i)`.
pub fn pass_at_k(n: u64, c: u64, k: u64) -> Result<f64, EvalError> {
    if k == 0 || k > n || c > n {
        return Err(EvalError::InvalidArgs(format!("need 1 <= k <= n and c <= n, got n={n} c={c} k={k}")));
    }
    if n - c < k {
        return Ok(1.0);
    }
    if let (Some(total), Some(miss)) = (binomial(n, k), binomial(n - c, k)) {
        if total < EXACT_LIMIT {
            return Ok((total - miss) as f64 / total as f64);
        }
    }
    let prod: f64 = ((n - c + 1)..=n).map(|i| 1.0 - k as f64 / i as f64).product();
    Ok(1.0 - prod)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Full,
    /// Medium and hard tasks only.
    Complex,
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(Split::Full),
            "complex" => Ok(Split::Complex),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// Tasks belonging to `split`.
pub fn filter_split(tasks: &[EvalTask], split: Split) -> Result<Vec<&EvalTask>, EvalError> {
    match split {
        Split::Full => Ok(tasks.iter().collect()),
        Split::Complex => {
            let mut out = Vec::new();
            for t in tasks {
                match t.difficulty {
                    None => return Err(EvalError::MissingDifficulty(t.id.clone())),
                    Some(d) if d.is_complex() => out.push(t),
                    Some(_) => {}
                }
            }
            Ok(out)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task_id: String,
    pub n: u64,
    pub c: u64,
    pub outcomes: Vec<ExecOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassAtKReport {
    pub split: Split,
    /// Sorted by task id.
    pub tasks: Vec<TaskResult>,
    pub pass_at_k: BTreeMap<u64, f64>,
}

impl PassAtKReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "split: {:?} ({} tasks)", self.split, self.tasks.len());
        let _ = writeln!(out, "{:<10} {:>8}", "metric", "value");
        for (k, v) in &self.pass_at_k {
            let _ = writeln!(out, "{:<10} {:>8.4}", format!("pass@{k}"), v);
        }
        out
    }
}

/// Unweighted mean of per-task estimators. Inputs are `(task_id, n, c)`;
/// summation runs in task-id order so the result does not depend on input order.
pub fn aggregate(per_task: &[(String, u64, u64)], k_list: &[u64]) -> Result<BTreeMap<u64, f64>, EvalError> {
    let mut sorted: Vec<&(String, u64, u64)> = per_task.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let mut out = BTreeMap::new();
    if sorted.is_empty() {
        return Ok(out);
    }
    for &k in k_list {
        let mut sum = 0.0;
        for (_, n, c) in &sorted {
            sum += pass_at_k(*n, *c, k)?;
        }
        out.insert(k, sum / sorted.len() as f64);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub sandbox: SandboxConfig,
    /// Concurrent sandboxed executions; 0 uses the number of CPUs.
    pub workers: usize,
}

/// Executes every sample of every task in `split` and aggregates pass@k.
pub fn evaluate_split(
    tasks: &[EvalTask],
    samples: &BTreeMap<String, Vec<String>>,
    k_list: &[u64],
    split: Split,
    config: &EvalConfig,
) -> Result<PassAtKReport, EvalError> {
    let mut selected = filter_split(tasks, split)?;
    selected.sort_by(|a, b| a.id.cmp(&b.id));
    let mut jobs = Vec::new();
    for (ti, t) in selected.iter().enumerate() {
        let s = samples
            .get(&t.id)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| EvalError::MissingSamples(t.id.clone()))?;
        jobs.extend(s.iter().map(|code| (ti, code.as_str())));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| EvalError::Sandbox(SandboxError::SandboxUnavailable(e.to_string())))?;
    let results: Vec<Result<ExecOutcome, SandboxError>> = pool.install(|| {
        jobs.par_iter()
            .map(|(ti, code)| {
                if code.trim().is_empty() {
                    return Ok(ExecOutcome::Fail("empty candidate".into()));
                }
                execute_program(&selected[*ti].program(code), &config.sandbox)
            })
            .collect()
    });
    let mut per_task: Vec<TaskResult> = selected
        .iter()
        .map(|t| TaskResult { task_id: t.id.clone(), n: 0, c: 0, outcomes: Vec::new() })
        .collect();
    for ((ti, _), res) in jobs.iter().zip(results) {
        let outcome = res?;
        let tr = &mut per_task[*ti];
        tr.n += 1;
        tr.c += u64::from(outcome.passed());
        tr.outcomes.push(outcome);
    }
    let counts: Vec<(String, u64, u64)> = per_task.iter().map(|t| (t.task_id.clone(), t.n, t.c)).collect();
    let pass_at_k = aggregate(&counts, k_list)?;
    Ok(PassAtKReport { split, tasks: per_task, pass_at_k })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Difficulty;

    // Enumerates every k-subset of n samples (the first c are correct).
    fn enumerate_pass_at_k(n: usize, c: usize, k: usize) -> f64 {
        fn walk(start: usize, left: usize, n: usize, c: usize, hit: bool, total: &mut u64, good: &mut u64) {
            if left == 0 {
                *total += 1;
                *good += u64::from(hit);
                return;
            }
            for i in start..n {
                walk(i + 1, left - 1, n, c, hit || i < c, total, good);
            }
        }
        let (mut total, mut good) = (0, 0);
        walk(0, k, n, c, false, &mut total, &mut good);
        good as f64 / total as f64
    }

    #[test]
    fn examples() {
        assert_eq!(pass_at_k(10, 10, 1).unwrap(), 1.0);
        assert_eq!(pass_at_k(10, 0, 5).unwrap(), 0.0);
        let oracle = enumerate_pass_at_k(4, 2, 2);
        assert!((oracle - 5.0 / 6.0).abs() < 1e-15);
        assert!((pass_at_k(4, 2, 2).unwrap() - oracle).abs() < 1e-15);
    }

    #[test]
    fn matches_enumeration_on_small_grid() {
        for n in 1..=9 {
            for c in 0..=n {
                for k in 1..=n {
                    let got = pass_at_k(n as u64, c as u64, k as u64).unwrap();
                    assert!((got - enumerate_pass_at_k(n, c, k)).abs() < 1e-12, "n={n} c={c} k={k}");
                }
            }
        }
    }

    #[test]
    fn product_form_for_large_n() {
        // C(200, 100) is far beyond 2^53, so this takes the product branch.
        let v = pass_at_k(200, 3, 100).unwrap();
        let expected = 1.0 - (100.0 * 99.0 * 98.0) / (200.0 * 199.0 * 198.0);
        assert!((v - expected).abs() < 1e-12);
    }

    #[test]
    fn invalid_args() {
        assert!(matches!(pass_at_k(5, 1, 0), Err(EvalError::InvalidArgs(_))));
        assert!(matches!(pass_at_k(5, 1, 6), Err(EvalError::InvalidArgs(_))));
        assert!(matches!(pass_at_k(5, 6, 1), Err(EvalError::InvalidArgs(_))));
    }

    #[test]
    fn aggregation_is_mean_and_order_free() {
        let per = vec![("b".to_string(), 4, 2), ("a".to_string(), 10, 1), ("c".to_string(), 5, 5)];
        let r = aggregate(&per, &[1, 2]).unwrap();
        let manual1 = (0.5 + 0.1 + 1.0) / 3.0;
        assert!((r[&1] - manual1).abs() < 1e-15);
        let manual2 = (5.0 / 6.0 + (1.0 - 36.0 / 45.0) + 1.0) / 3.0;
        assert!((r[&2] - manual2).abs() < 1e-12);
        let mut rev = per.clone();
        rev.reverse();
        assert_eq!(aggregate(&rev, &[1, 2]).unwrap(), r);
    }

    fn task(id: &str, d: Option<Difficulty>) -> EvalTask {
        EvalTask {
            id: id.into(),
            prompt: String::new(),
            entry_point: "f".into(),
            tests: "assert f() == 1".into(),
            difficulty: d,
            reference: None,
        }
    }

    #[test]
    fn complex_split_filters_and_requires_labels() {
        let tasks = vec![
            task("e", Some(Difficulty::Easy)),
            task("m", Some(Difficulty::Medium)),
            task("h", Some(Difficulty::Hard)),
        ];
        let ids: Vec<_> = filter_split(&tasks, Split::Complex).unwrap().iter().map(|t| t.id.clone()).collect();
        assert_eq!(ids, vec!["m", "h"]);
        let unlabeled = vec![task("x", None)];
        assert!(matches!(filter_split(&unlabeled, Split::Complex), Err(EvalError::MissingDifficulty(_))));
        assert_eq!(filter_split(&unlabeled, Split::Full).unwrap().len(), 1);
    }

    #[test]
    fn evaluate_all_pass() {
        let tasks = vec![task("a", Some(Difficulty::Hard)), task("b", Some(Difficulty::Medium))];
        let good = "def f():\n    return 1".to_string();
        let samples = BTreeMap::from([
            ("a".to_string(), vec![good.clone(); 3]),
            ("b".to_string(), vec![good.clone(), good]),
        ]);
        let r = evaluate_split(&tasks, &samples, &[1, 2], Split::Complex, &EvalConfig::default()).unwrap();
        assert_eq!(r.pass_at_k[&1], 1.0);
        assert_eq!(r.pass_at_k[&2], 1.0);
        assert!(r.to_table().contains("pass@2"));
    }

    #[test]
    fn evaluate_requires_samples() {
        let tasks = vec![task("a", None)];
        let err = evaluate_split(&tasks, &BTreeMap::new(), &[1], Split::Full, &EvalConfig::default()).unwrap_err();
        assert_eq!(err, EvalError::MissingSamples("a".into()));
    }
}
