//! From search outcomes to a fine-tuning file: code is stripped out of the
//! thinking, each success becomes a (question, thinking, code) triple, and
//! triples are written in either record layout.
//!
//! ```text
//! cargo run --example assemble_sft
//! ```

use std::path::Path;

use reasoning_mcts::data::{assemble_sft, collect_triples, dataset_stats, sft_record, strip_code, SftFormat};
use reasoning_mcts::search::read_outcomes;

fn main() {
    let leaky = "1. Count each character.\n```python\nfrom collections import Counter\n```\n\n\n2. Return the first with count one.";
    println!("strip_code:\n{}\n", strip_code(leaky));

    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden/outcomes.jsonl");
    let outcomes: Vec<_> = read_outcomes(&golden).unwrap().into_iter().filter_map(|r| r.outcome).collect();
    let (triples, excluded) = collect_triples(&outcomes);
    println!("{} triples, {excluded} excluded", triples.len());
    println!("{}", sft_record(&triples[0], SftFormat::ChatMessages));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sft.jsonl");
    let summary = assemble_sft(&outcomes, SftFormat::InstructionOutput, &path).unwrap();
    println!("wrote {} records to {}", summary.written, path.display());
    let mut stats = dataset_stats(&triples);
    stats.excluded_failures = excluded;
    println!("{}", serde_json::to_string_pretty(&stats).unwrap());
}
