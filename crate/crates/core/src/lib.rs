//! Monte Carlo tree search over natural-language reasoning steps for
//! programming questions, with model self-evaluation and reflection.
//!
//! The pipeline:
//!
//! 1. [`search`] grows a [`tree::SearchTree`] per question. Each iteration
//!    selects a leaf by UCB1, expands it with several distinct candidate steps,
//!    scores and reflects on each new step with the model, and propagates the
//!    scores back to the root. The search stops when the model reflects with
//!    the end marker or the iteration limit is reached.
//! 2. The chosen path becomes the *thinking*, which the model converts into code.
//! 3. [`data`] decontaminates question sets against benchmarks and assembles
//!    (question, thinking, code) triples into supervised fine-tuning files.
//! 4. [`eval`] executes generated code in a sandbox and reports pass@k.
//!
//! All model access goes through [`backend::ChatBackend`]; the scripted
//! backend makes every stage reproducible offline.

pub mod backend;
pub mod config;
pub mod corpus;
pub mod data;
pub mod eval;
pub mod search;
pub mod tree;

pub use backend::{BackendDescriptor, ChatBackend, ReasoningModel, ScriptedBackend};
pub use corpus::{Difficulty, QuestionItem};
pub use search::{run_search, SearchEngine, SearchOutcome};
pub use tree::{SearchConfig, SearchTree, ThinkingRecord};
