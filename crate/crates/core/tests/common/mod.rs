#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use reasoning_mcts::config::{resolve, set_path, PipelineConfig};
use reasoning_mcts::corpus::read_questions;
use reasoning_mcts::data::{assemble_sft, collect_triples, dataset_stats};
use reasoning_mcts::search::{read_outcomes, CorpusReport, SearchEngine};
use serde_json::json;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn golden(name: &str) -> PathBuf {
    fixture("golden").join(name)
}

/// Config of the scripted golden run, writing into `out`.
pub fn golden_config(out: &Path, parallelism: usize) -> PipelineConfig {
    let mut flags = json!({});
    set_path(&mut flags, &["backend", "script_path"], json!(fixture("script.jsonl")));
    set_path(&mut flags, &["paths", "questions"], json!(fixture("questions.jsonl")));
    set_path(&mut flags, &["paths", "output_dir"], json!(out));
    set_path(&mut flags, &["parallelism"], json!(parallelism));
    resolve(Some(&fixture("pipeline.toml")), json!({}), flags).expect("fixture config resolves")
}

pub struct GoldenRun {
    pub report: CorpusReport,
    pub checkpoint: PathBuf,
    pub sft: PathBuf,
    pub stats: PathBuf,
}

/// Generation, assembly and stats over the fixture corpus, the same artifacts
/// the CLI writes.
pub fn golden_run(out: &Path, parallelism: usize) -> GoldenRun {
    let cfg = golden_config(out, parallelism);
    fs::create_dir_all(out).unwrap();
    let questions = read_questions(cfg.paths.questions.as_ref().unwrap()).unwrap();
    let engine = SearchEngine::from_descriptor(cfg.search.clone(), &cfg.backend)
        .unwrap()
        .with_settings(cfg.model.clone());
    let checkpoint = cfg.checkpoint_path();
    let report = engine.run_corpus(&questions, cfg.parallelism, &checkpoint).unwrap();

    let records = read_outcomes(&checkpoint).unwrap();
    let failed = records.iter().filter(|r| r.outcome.is_none()).count();
    let outcomes: Vec<_> = records.into_iter().filter_map(|r| r.outcome).collect();
    let sft = out.join("sft.jsonl");
    assemble_sft(&outcomes, cfg.sft_format, &sft).unwrap();
    let (triples, excluded) = collect_triples(&outcomes);
    let mut stats = dataset_stats(&triples);
    stats.excluded_failures = excluded + failed;
    let stats_path = out.join("stats.json");
    fs::write(&stats_path, serde_json::to_string_pretty(&stats).unwrap() + "\n").unwrap();
    GoldenRun { report, checkpoint, sft, stats: stats_path }
}

pub fn updating_golden() -> bool {
    std::env::var_os("UPDATE_GOLDEN").is_some()
}

/// Compares `actual` with the frozen golden file, or refreshes it when
/// `UPDATE_GOLDEN` is set.
pub fn check_golden(actual: &Path, name: &str) -> Result<(), String> {
    let want = golden(name);
    let got = fs::read(actual).map_err(|e| e.to_string())?;
    if updating_golden() {
        fs::write(&want, &got).map_err(|e| e.to_string())?;
        return Ok(());
    }
    let expected = fs::read(&want).map_err(|e| format!("{}: {e} (run with UPDATE_GOLDEN=1)", want.display()))?;
    if expected == got {
        Ok(())
    } else {
        Err(format!("{} differs from golden {}", actual.display(), want.display()))
    }
}
