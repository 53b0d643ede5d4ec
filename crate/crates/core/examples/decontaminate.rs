//! 10-gram decontamination of a training corpus against benchmark questions.
//!
//! ```text
//! cargo run --example decontaminate -- [threshold]
//! ```

use std::path::Path;

use reasoning_mcts::corpus::read_questions;
use reasoning_mcts::data::{decontaminate, ngram_similarity, DEFAULT_NGRAM, DEFAULT_THRESHOLD};

fn main() {
    let threshold: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(DEFAULT_THRESHOLD);
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let train = read_questions(&fixtures.join("contaminated.jsonl")).unwrap();
    let bench = read_questions(&fixtures.join("benchmarks.jsonl")).unwrap();

    let (retained, report) = decontaminate(&train, &bench, DEFAULT_NGRAM, threshold);
    print!("{}", report.to_text());
    println!("kept {} of {}", retained.len(), train.len());

    let a = "Write a function to sort a given matrix in ascending order according to the sum of its rows.";
    let b = "write a function to SORT a given matrix   in ascending order according to the sum of its rows!";
    println!("\ncase and spacing do not matter: {}", ngram_similarity(a, b, DEFAULT_NGRAM));
}
