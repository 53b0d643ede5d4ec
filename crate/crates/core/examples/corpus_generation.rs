//! Generation over the 20-question fixture corpus with an outcome checkpoint,
//! then a second run that resumes everything from it.
//!
//! ```text
//! cargo run --example corpus_generation -- [parallelism]
//! ```

use std::path::Path;

use reasoning_mcts::backend::BackendDescriptor;
use reasoning_mcts::corpus::read_questions;
use reasoning_mcts::search::{RecordStatus, SearchEngine};
use reasoning_mcts::SearchConfig;

fn main() {
    let parallelism: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(4);
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let questions = read_questions(&fixtures.join("questions.jsonl")).unwrap();
    let descriptor = BackendDescriptor {
        end_rate: 0.1,
        ..BackendDescriptor::scripted_file(fixtures.join("script.jsonl"))
    };
    let config = SearchConfig { seed: Some(7), ..SearchConfig::default() };
    let engine = SearchEngine::from_descriptor(config, &descriptor).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let checkpoint = dir.path().join("outcomes.jsonl");
    let first = engine.run_corpus(&questions, parallelism, &checkpoint).unwrap();
    for r in &first.records {
        let detail = match (&r.outcome, &r.error) {
            (Some(o), _) => format!("{} steps, {}", o.thinking.len(), o.summary.termination),
            (None, Some(e)) => e.clone(),
            _ => String::new(),
        };
        println!("{:<4} {:<8} {detail}", r.question_id, format!("{:?}", r.status));
    }
    let ok = first.records.iter().filter(|r| r.status == RecordStatus::Ok).count();
    println!("\nfirst run: executed {}, ok {ok}, not ok {}", first.executed, first.failures());

    let second = engine.run_corpus(&questions, parallelism, &checkpoint).unwrap();
    println!("resumed run: executed {}, resumed {}", second.executed, second.resumed);
    assert_eq!(first.records, second.records);
}
