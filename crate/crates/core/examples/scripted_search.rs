//! One search with the deterministic scripted backend: a few fixture rules
//! for the interesting steps, synthetic answers for everything else.
//!
//! ```text
//! cargo run --example scripted_search
//! ```

use reasoning_mcts::backend::{BackendDescriptor, FixtureRule, Phase};
use reasoning_mcts::{run_search, QuestionItem, SearchConfig};

fn main() {
    let question = QuestionItem::new("demo", "Return the second largest distinct value in a list of integers.");
    let rules = vec![
        FixtureRule::respond("Remove duplicates by converting the list to a set.").phase(Phase::Expand).at_depth(1),
        FixtureRule::respond("Score: 9\nPrinciple: Solution correctness\nReason: sound.")
            .phase(Phase::Score)
            .containing("Sort the distinct values"),
        FixtureRule::respond("<end>").phase(Phase::Reflect).containing("Sort the distinct values"),
        FixtureRule::respond("Sort the distinct values in descending order and take the second one.")
            .phase(Phase::Expand)
            .at_depth(2),
        FixtureRule::respond("```python\ndef second_largest(xs):\n    return sorted(set(xs), reverse=True)[1]\n```")
            .phase(Phase::Code),
    ];
    let descriptor = BackendDescriptor::scripted_rules(rules);
    let config = SearchConfig { seed: Some(3), ..SearchConfig::default() };

    let outcome = run_search(&question, &config, &descriptor).expect("scripted search succeeds");
    println!("termination: {}", outcome.summary.termination);
    println!("iterations:  {}", outcome.summary.iterations);
    println!("nodes:       {}", outcome.summary.node_count);
    println!("calls:       {}", outcome.summary.backend_calls);
    println!("\nthinking:\n{}", outcome.thinking.numbered());
    println!("\ncode:\n{}", outcome.code);
    println!("\ncheckpoint line: {} bytes", outcome.tree.to_line().len());
}
