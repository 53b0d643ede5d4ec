//! pass@k evaluation: sandboxed execution of sampled completions against
//! HumanEval-style tests, on the full and the complex split.
//!
//! ```text
//! cargo run --example pass_at_k
//! ```

use std::path::Path;

use reasoning_mcts::eval::{evaluate_split, load_samples, load_tasks, pass_at_k, self_test, EvalConfig, SandboxConfig, Split};

fn main() {
    println!("pass@2 with 2 of 4 samples correct: {:.4}", pass_at_k(4, 2, 2).unwrap());
    println!("pass@1 is c/n: {}", pass_at_k(7, 3, 1).unwrap() == 3.0 / 7.0);

    let report = self_test(&SandboxConfig::default()).expect("python3 available");
    println!("sandbox: {report:?}\n");

    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let tasks = load_tasks(&fixtures.join("tasks.jsonl"), Some(&fixtures.join("difficulty.jsonl"))).unwrap();
    let samples = load_samples(&fixtures.join("samples.jsonl")).unwrap();
    let config = EvalConfig { sandbox: SandboxConfig::default().with_timeout(std::time::Duration::from_secs(5)), workers: 4 };
    for split in [Split::Full, Split::Complex] {
        let report = evaluate_split(&tasks, &samples, &[1, 2, 4], split, &config).unwrap();
        for t in &report.tasks {
            println!("{:<6} {}/{}", t.task_id, t.c, t.n);
        }
        println!("{}", report.to_table());
    }
}
