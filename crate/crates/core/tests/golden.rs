mod common;

use std::fs;

use common::{check_golden, golden_run};

#[test]
fn scripted_corpus_matches_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    let run = golden_run(dir.path(), 1);
    assert_eq!(run.report.records.len(), 20);
    check_golden(&run.checkpoint, "outcomes.jsonl").unwrap();
    check_golden(&run.sft, "sft.jsonl").unwrap();
    check_golden(&run.stats, "stats.json").unwrap();
}

#[test]
fn parallel_run_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let seq = golden_run(a.path(), 1);
    let par = golden_run(b.path(), 4);
    for (x, y) in [(&seq.checkpoint, &par.checkpoint), (&seq.sft, &par.sft), (&seq.stats, &par.stats)] {
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{}", x.display());
    }
}

#[test]
fn golden_corpus_covers_every_record_status() {
    let dir = tempfile::tempdir().unwrap();
    let run = golden_run(dir.path(), 2);
    let statuses: Vec<_> = run.report.records.iter().map(|r| format!("{:?}", r.status)).collect();
    for s in ["Ok", "Partial", "Failed"] {
        assert!(statuses.iter().any(|x| x == s), "{s} missing from {statuses:?}");
    }
    let sft = fs::read_to_string(&run.sft).unwrap();
    assert_eq!(sft.lines().count(), run.report.successes().count());
}

#[test]
fn resumed_records_equal_fresh_records() {
    let dir = tempfile::tempdir().unwrap();
    let fresh = golden_run(dir.path(), 1);
    let reloaded = reasoning_mcts::search::read_outcomes(&fresh.checkpoint).unwrap();
    assert_eq!(fresh.report.records, reloaded);
}
