//! Search against a real OpenAI-compatible endpoint (vLLM, llama.cpp server,
//! a hosted API, ...). Skips unless an endpoint is configured:
//!
//! ```text
//! CHAT_ENDPOINT=http://localhost:8000/v1 CHAT_MODEL=qwen2.5-7b-instruct \
//!   CHAT_TOKEN_ENV=OPENAI_API_KEY cargo run --example http_backend
//! ```

use reasoning_mcts::backend::BackendDescriptor;
use reasoning_mcts::{run_search, QuestionItem, SearchConfig};

fn main() {
    let (Ok(endpoint), Ok(model)) = (std::env::var("CHAT_ENDPOINT"), std::env::var("CHAT_MODEL")) else {
        eprintln!("set CHAT_ENDPOINT and CHAT_MODEL to run this example");
        return;
    };
    let descriptor = BackendDescriptor {
        auth_token_env: std::env::var("CHAT_TOKEN_ENV").ok(),
        max_concurrent_requests: 4,
        ..BackendDescriptor::http(endpoint, model)
    };
    let question = QuestionItem::new(
        "live",
        "Given a list of stock prices by day, return the maximum profit from one buy followed by one sell.",
    );
    match run_search(&question, &SearchConfig::default(), &descriptor) {
        Ok(o) => {
            println!("{} after {} iterations\n", o.summary.termination, o.summary.iterations);
            println!("{}\n\n{}", o.thinking.numbered(), o.code);
        }
        Err(e) => eprintln!("search failed: {e}"),
    }
}
