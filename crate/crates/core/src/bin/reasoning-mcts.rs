use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use tracing::info;
use tracing_subscriber::EnvFilter;

use reasoning_mcts::config::{env_layer, resolve, set_path, PipelineConfig};
use reasoning_mcts::corpus::{read_questions, write_jsonl};
use reasoning_mcts::data::{assemble_sft, collect_triples, dataset_stats, decontaminate};
use reasoning_mcts::eval::{evaluate_split, load_samples, load_tasks, self_test, EvalError};
use reasoning_mcts::search::{read_outcomes, RecordStatus, SearchEngine};
use reasoning_mcts::tree::Termination;

const EXIT_CONFIG: u8 = 1;
const EXIT_PARTIAL: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

/// Tree-search generation of reasoning-annotated code data, plus the
/// decontamination, assembly and evaluation steps around it.
#[derive(Parser)]
#[command(name = "reasoning-mcts", version)]
struct Cli {
    /// TOML config file (flags > REASONING_MCTS_* env > file > defaults).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory receiving every artifact.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Log filter for stderr, e.g. `warn` or `reasoning_mcts=debug`.
    #[arg(long, global = true)]
    log_level: Option<String>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the search over a question corpus, writing the outcome checkpoint.
    Generate(GenerateArgs),
    /// Drop training questions that overlap benchmark questions.
    Decontaminate(DecontaminateArgs),
    /// Turn a checkpoint into a supervised fine-tuning file.
    Assemble(AssembleArgs),
    /// Execute samples against benchmark tests and report pass@k.
    Eval(EvalArgs),
    /// Summarize the dataset a checkpoint would produce.
    Stats(StatsArgs),
    /// Verify the execution sandbox on this host.
    SandboxCheck,
}

#[derive(Args)]
struct GenerateArgs {
    /// Question corpus, one JSON object per line.
    #[arg(long)]
    questions: Option<PathBuf>,
    /// Outcome checkpoint; defaults to <output-dir>/outcomes.jsonl. Existing records are resumed.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Questions searched concurrently.
    #[arg(long)]
    parallelism: Option<usize>,
    /// Model backend: `scripted` or `http`.
    #[arg(long)]
    backend: Option<String>,
    /// Base URL of an OpenAI-compatible API (http backend).
    #[arg(long)]
    endpoint: Option<String>,
    /// Model name sent to the API (http backend).
    #[arg(long)]
    model: Option<String>,
    /// Environment variable holding the bearer token (http backend).
    #[arg(long)]
    auth_token_env: Option<String>,
    /// Fixture rule file (scripted backend).
    #[arg(long)]
    script: Option<PathBuf>,
    /// Seed for the scripted fallback responses.
    #[arg(long)]
    seed: Option<u64>,
    /// Maximum search iterations per question.
    #[arg(long)]
    iteration_limit: Option<usize>,
    /// Children generated per expansion.
    #[arg(long)]
    branching: Option<usize>,
    /// UCB1 exploration constant.
    #[arg(long)]
    exploration_c: Option<f64>,
    /// Backpropagation blending weight.
    #[arg(long)]
    alpha: Option<f64>,
    /// Generation attempts per child before giving up on duplicates.
    #[arg(long)]
    max_retries: Option<usize>,
    /// Sampling temperature for step generation.
    #[arg(long)]
    temperature: Option<f64>,
    /// Nucleus sampling mass for step generation.
    #[arg(long)]
    top_p: Option<f64>,
}

#[derive(Args)]
struct DecontaminateArgs {
    /// Training question corpus to filter.
    #[arg(long)]
    questions: Option<PathBuf>,
    /// Benchmark questions to protect.
    #[arg(long)]
    benchmarks: Option<PathBuf>,
    /// N-gram length in tokens.
    #[arg(long)]
    ngram: Option<usize>,
    /// Remove questions whose overlap is strictly above this fraction.
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct AssembleArgs {
    /// Outcome checkpoint to read; defaults to <output-dir>/outcomes.jsonl.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Record layout: `instruction_output` or `chat_messages`.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    /// HumanEval- or MBPP-layout task file.
    #[arg(long)]
    tasks: Option<PathBuf>,
    /// `{task_id, completion}` lines; not needed with --reference.
    #[arg(long)]
    samples: Option<PathBuf>,
    /// Sidecar of `{task_id, difficulty}` lines, required for the complex split.
    #[arg(long)]
    difficulty: Option<PathBuf>,
    /// Comma-separated k values for pass@k.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<u64>>,
    /// `full` or `complex` (medium and hard tasks).
    #[arg(long)]
    split: Option<String>,
    /// Evaluate the tasks' reference solutions instead of samples.
    #[arg(long)]
    reference: bool,
    /// Per-execution wall-clock limit in seconds.
    #[arg(long)]
    timeout: Option<f64>,
    /// Concurrent executions; 0 uses every CPU.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct StatsArgs {
    /// Outcome checkpoint to read; defaults to <output-dir>/outcomes.jsonl.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl ToString) -> Self {
        Self { code: EXIT_CONFIG, message: message.to_string() }
    }

    fn internal(message: impl ToString) -> Self {
        Self { code: EXIT_INTERNAL, message: message.to_string() }
    }
}

fn put<T: serde::Serialize>(layer: &mut Value, path: &[&str], value: Option<T>) {
    if let Some(v) = value {
        set_path(layer, path, serde_json::to_value(v).expect("flag serializes"));
    }
}

fn flag_layer(cli: &Cli) -> Value {
    let mut l = json!({});
    put(&mut l, &["paths", "output_dir"], cli.output_dir.as_ref());
    put(&mut l, &["log_level"], cli.log_level.as_ref());
    match &cli.command {
        Cmd::Generate(a) => {
            put(&mut l, &["paths", "questions"], a.questions.as_ref());
            put(&mut l, &["paths", "checkpoint"], a.checkpoint.as_ref());
            put(&mut l, &["parallelism"], a.parallelism);
            put(&mut l, &["backend", "kind"], a.backend.as_ref());
            put(&mut l, &["backend", "endpoint"], a.endpoint.as_ref());
            put(&mut l, &["backend", "model_name"], a.model.as_ref());
            put(&mut l, &["backend", "auth_token_env"], a.auth_token_env.as_ref());
            put(&mut l, &["backend", "script_path"], a.script.as_ref());
            put(&mut l, &["search", "seed"], a.seed);
            put(&mut l, &["search", "iteration_limit"], a.iteration_limit);
            put(&mut l, &["search", "branching"], a.branching);
            put(&mut l, &["search", "exploration_c"], a.exploration_c);
            put(&mut l, &["search", "alpha"], a.alpha);
            put(&mut l, &["search", "max_retries"], a.max_retries);
            put(&mut l, &["search", "temperature"], a.temperature);
            put(&mut l, &["search", "top_p"], a.top_p);
        }
        Cmd::Decontaminate(a) => {
            put(&mut l, &["paths", "questions"], a.questions.as_ref());
            put(&mut l, &["paths", "benchmarks"], a.benchmarks.as_ref());
            put(&mut l, &["decontamination", "ngram"], a.ngram);
            put(&mut l, &["decontamination", "threshold"], a.threshold);
        }
        Cmd::Assemble(a) => {
            put(&mut l, &["paths", "checkpoint"], a.checkpoint.as_ref());
            put(&mut l, &["sft_format"], a.format.as_ref());
        }
        Cmd::Eval(a) => {
            put(&mut l, &["paths", "tasks"], a.tasks.as_ref());
            put(&mut l, &["paths", "samples"], a.samples.as_ref());
            put(&mut l, &["paths", "difficulty"], a.difficulty.as_ref());
            put(&mut l, &["eval", "k"], a.k.as_ref());
            put(&mut l, &["eval", "split"], a.split.as_ref());
            put(&mut l, &["eval", "reference"], a.reference.then_some(true));
            put(&mut l, &["eval", "sandbox", "timeout_secs"], a.timeout);
            put(&mut l, &["eval", "workers"], a.workers);
        }
        Cmd::Stats(a) => put(&mut l, &["paths", "checkpoint"], a.checkpoint.as_ref()),
        Cmd::SandboxCheck => {}
    }
    l
}

fn required<'a>(path: &'a Option<PathBuf>, name: &str) -> Result<&'a Path, Failure> {
    let p = path.as_deref().ok_or_else(|| Failure::config(format!("missing required path: {name}")))?;
    if !p.is_file() {
        return Err(Failure::config(format!("{name} file not found: {}", p.display())));
    }
    Ok(p)
}

fn output_dir(cfg: &PipelineConfig) -> Result<&Path, Failure> {
    let dir = cfg.paths.output_dir.as_path();
    fs::create_dir_all(dir).map_err(|e| Failure::internal(format!("create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(Failure::internal)?;
    fs::write(path, text + "\n").map_err(|e| Failure::internal(format!("write {}: {e}", path.display())))
}

fn generate(cfg: &PipelineConfig) -> Result<u8, Failure> {
    let qpath = required(&cfg.paths.questions, "questions")?;
    let questions = read_questions(qpath).map_err(Failure::config)?;
    let engine = SearchEngine::from_descriptor(cfg.search.clone(), &cfg.backend)
        .map_err(Failure::config)?
        .with_settings(cfg.model.clone());
    let out = output_dir(cfg)?;
    let checkpoint = cfg.checkpoint_path();
    let report = engine
        .run_corpus(&questions, cfg.parallelism, &checkpoint)
        .map_err(Failure::internal)?;
    let outcomes: Vec<_> = report.records.iter().filter_map(|r| r.outcome.as_ref()).collect();
    let successes = report.successes().count();
    let ended = outcomes
        .iter()
        .filter(|o| o.summary.termination == Termination::EndTagReached)
        .count();
    let iterations: usize = outcomes.iter().map(|o| o.summary.iterations).sum();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let summary = json!({
        "questions": report.records.len(),
        "successes": successes,
        "partial": report.records.iter().filter(|r| r.status == RecordStatus::Partial).count(),
        "failed": report.records.iter().filter(|r| r.status == RecordStatus::Failed).count(),
        "end_rate": ratio(ended, outcomes.len()),
        "mean_iterations": ratio(iterations, outcomes.len()),
        "executed": report.executed,
        "resumed": report.resumed,
    });
    info!(checkpoint = %checkpoint.display(), "outcomes written");
    write_json(&out.join("generate_summary.json"), &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    Ok(if report.failures() > 0 { EXIT_PARTIAL } else { 0 })
}

fn decontaminate_cmd(cfg: &PipelineConfig) -> Result<u8, Failure> {
    let qpath = required(&cfg.paths.questions, "questions")?;
    let bpath = required(&cfg.paths.benchmarks, "benchmarks")?;
    let train = read_questions(qpath).map_err(Failure::config)?;
    let bench = read_questions(bpath).map_err(Failure::config)?;
    let d = &cfg.decontamination;
    let (retained, report) = decontaminate(&train, &bench, d.ngram, d.threshold);
    let out = output_dir(cfg)?;
    write_jsonl(&out.join("questions.decontaminated.jsonl"), &retained).map_err(Failure::internal)?;
    let text = report.to_text();
    fs::write(out.join("contamination_report.txt"), &text).map_err(Failure::internal)?;
    write_json(&out.join("contamination_report.json"), &report)?;
    print!("{text}");
    Ok(0)
}

fn load_records(cfg: &PipelineConfig) -> Result<Vec<reasoning_mcts::search::CheckpointRecord>, Failure> {
    let path = cfg.checkpoint_path();
    if !path.is_file() {
        return Err(Failure::config(format!("checkpoint not found: {}", path.display())));
    }
    read_outcomes(&path).map_err(Failure::config)
}

fn assemble(cfg: &PipelineConfig) -> Result<u8, Failure> {
    let records = load_records(cfg)?;
    let failed = records.iter().filter(|r| r.outcome.is_none()).count();
    let outcomes: Vec<_> = records.into_iter().filter_map(|r| r.outcome).collect();
    let out = output_dir(cfg)?;
    let mut summary =
        assemble_sft(&outcomes, cfg.sft_format, &out.join("sft.jsonl")).map_err(Failure::config)?;
    summary.excluded_failures += failed;
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    Ok(0)
}

fn stats(cfg: &PipelineConfig) -> Result<u8, Failure> {
    let records = load_records(cfg)?;
    let failed = records.iter().filter(|r| r.outcome.is_none()).count();
    let outcomes: Vec<_> = records.into_iter().filter_map(|r| r.outcome).collect();
    let (triples, excluded) = collect_triples(&outcomes);
    let mut s = dataset_stats(&triples);
    s.excluded_failures = excluded + failed;
    let out = output_dir(cfg)?;
    write_json(&out.join("stats.json"), &s)?;
    println!("{}", serde_json::to_string_pretty(&s).expect("stats serialize"));
    Ok(0)
}

fn eval(cfg: &PipelineConfig) -> Result<u8, Failure> {
    let tpath = required(&cfg.paths.tasks, "tasks")?;
    let difficulty = match &cfg.paths.difficulty {
        Some(_) => Some(required(&cfg.paths.difficulty, "difficulty")?),
        None => None,
    };
    let tasks = load_tasks(tpath, difficulty).map_err(Failure::config)?;
    let samples = if cfg.eval.reference {
        tasks
            .iter()
            .filter_map(|t| t.reference.clone().map(|r| (t.id.clone(), vec![r])))
            .collect()
    } else {
        load_samples(required(&cfg.paths.samples, "samples")?).map_err(Failure::config)?
    };
    let report = evaluate_split(&tasks, &samples, &cfg.eval.k, cfg.eval.split, &cfg.eval.run_config())
        .map_err(|e| match e {
            EvalError::Sandbox(_) => Failure::internal(e),
            _ => Failure::config(e),
        })?;
    let out = output_dir(cfg)?;
    let stem = match cfg.eval.split {
        reasoning_mcts::eval::Split::Full => "eval_full",
        reasoning_mcts::eval::Split::Complex => "eval_complex",
    };
    let table = report.to_table();
    fs::write(out.join(format!("{stem}.txt")), &table).map_err(Failure::internal)?;
    write_json(&out.join(format!("{stem}.json")), &report)?;
    print!("{table}");
    Ok(0)
}

fn sandbox_check(cfg: &PipelineConfig) -> Result<u8, Failure> {
    let report = self_test(&cfg.eval.sandbox).map_err(Failure::internal)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    let ok = report.runs_python && report.network_blocked && report.timeout_enforced;
    Ok(if ok { 0 } else { EXIT_INTERNAL })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match resolve(cli.config.as_deref(), env_layer(std::env::vars()), flag_layer(&cli)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let filter = EnvFilter::try_new(&cfg.log_level).unwrap_or_else(|_| EnvFilter::new("info"));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
    info!(command = ?std::env::args().nth(1), "starting");
    let result = match &cli.command {
        Cmd::Generate(_) => generate(&cfg),
        Cmd::Decontaminate(_) => decontaminate_cmd(&cfg),
        Cmd::Assemble(_) => assemble(&cfg),
        Cmd::Eval(_) => eval(&cfg),
        Cmd::Stats(_) => stats(&cfg),
        Cmd::SandboxCheck => sandbox_check(&cfg),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
