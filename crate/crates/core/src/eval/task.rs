use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::EvalError;
use crate::corpus::{read_jsonl, Difficulty};

/// A benchmark problem with executable tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalTask {
    pub id: String,
    pub prompt: String,
    pub entry_point: String,
    pub tests: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<Difficulty>,
    /// Known-good solution shipped with the task, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
}

static DEF_NAME: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^\s*def\s+([A-Za-z_]\w*)\s*\(").unwrap());

fn id_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn str_field<'a>(v: &'a Value, key: &str) -> Option<&'a str> {
    v.get(key).and_then(Value::as_str)
}

impl EvalTask {
    /// Accepts the HumanEval layout (`task_id`, `prompt`, `entry_point`,
    /// `test`, optional `canonical_solution`) and the MBPP layout (`task_id`,
    /// `text`, `code`, `test_list`, optional `test_setup_code`).
    pub fn from_json(v: &Value) -> Result<Self, String> {
        let id = v.get("task_id").and_then(id_string).ok_or("missing task_id")?;
        if let Some(test) = str_field(v, "test") {
            let entry_point = str_field(v, "entry_point").ok_or("missing entry_point")?.to_string();
            let prompt = str_field(v, "prompt").unwrap_or_default().to_string();
            let reference = str_field(v, "canonical_solution").map(|s| format!("{prompt}{s}"));
            return Self::checked(id, prompt, entry_point, test.to_string(), reference);
        }
        let tests: Vec<&str> = v
            .get("test_list")
            .and_then(Value::as_array)
            .ok_or("missing test or test_list")?
            .iter()
            .filter_map(Value::as_str)
            .collect();
        let setup = str_field(v, "test_setup_code").unwrap_or_default();
        let code = str_field(v, "code");
        let entry_point = match str_field(v, "entry_point") {
            Some(e) => e.to_string(),
            None => code
                .and_then(|c| DEF_NAME.captures(c))
                .map(|c| c[1].to_string())
                .ok_or("cannot determine entry_point")?,
        };
        let prompt = str_field(v, "text").or(str_field(v, "prompt")).unwrap_or_default().to_string();
        let mut test = String::new();
        if !setup.trim().is_empty() {
            test.push_str(setup);
            test.push('\n');
        }
        test.push_str(&tests.join("\n"));
        Self::checked(id, prompt, entry_point, test, code.map(str::to_string))
    }

    fn checked(
        id: String,
        prompt: String,
        entry_point: String,
        tests: String,
        reference: Option<String>,
    ) -> Result<Self, String> {
        if tests.trim().is_empty() {
            return Err(format!("task {id} has no tests"));
        }
        Ok(Self { id, prompt, entry_point, tests, difficulty: None, reference })
    }

    /// Standalone program: candidate, then tests, then the `check` call when
    /// the tests define one. A candidate that does not define the entry point
    /// is treated as a completion of the prompt.
    pub fn program(&self, candidate: &str) -> String {
        let defines = DEF_NAME
            .captures_iter(candidate)
            .any(|c| c[1] == *self.entry_point);
        let body = if defines {
            candidate.to_string()
        } else {
            format!("{}{}", self.prompt, candidate)
        };
        let mut program = format!("{body}\n\n{}\n", self.tests);
        if self.tests.contains("def check(") {
            program.push_str(&format!("\ncheck({})\n", self.entry_point));
        }
        program
    }
}

#[derive(Deserialize)]
struct DifficultyRow {
    #[serde(deserialize_with = "de_id")]
    task_id: String,
    difficulty: Difficulty,
}

fn de_id<'de, D: serde::Deserializer<'de>>(d: D) -> Result<String, D::Error> {
    let v = Value::deserialize(d)?;
    id_string(&v).ok_or_else(|| serde::de::Error::custom("task_id must be a string or number"))
}

pub fn load_tasks(path: &Path, difficulty: Option<&Path>) -> Result<Vec<EvalTask>, EvalError> {
    let rows: Vec<Value> = read_jsonl(path).map_err(|e| EvalError::Input(e.to_string()))?;
    let mut tasks = rows
        .iter()
        .enumerate()
        .map(|(i, v)| EvalTask::from_json(v).map_err(|e| EvalError::Input(format!("{}:{}: {e}", path.display(), i + 1))))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(dpath) = difficulty {
        let labels: HashMap<String, Difficulty> = read_jsonl::<DifficultyRow>(dpath)
            .map_err(|e| EvalError::Input(e.to_string()))?
            .into_iter()
            .map(|r| (r.task_id, r.difficulty))
            .collect();
        for t in &mut tasks {
            t.difficulty = labels.get(&t.id).copied();
        }
    }
    Ok(tasks)
}

#[derive(Deserialize)]
struct SampleRow {
    #[serde(deserialize_with = "de_id")]
    task_id: String,
    completion: String,
}

/// Reads `{task_id, completion}` records, grouped per task in file order.
pub fn load_samples(path: &Path) -> Result<BTreeMap<String, Vec<String>>, EvalError> {
    let rows: Vec<SampleRow> = read_jsonl(path).map_err(|e| EvalError::Input(e.to_string()))?;
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for r in rows {
        out.entry(r.task_id).or_default().push(r.completion);
    }
    Ok(out)
}
