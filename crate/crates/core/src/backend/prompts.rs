//! Prompt templates for each phase.
//!
//! Templates live in `prompts/*.txt`. A line containing only `---` separates
//! the system message from the user message. Placeholders:
//!
//! | placeholder    | phases          | filled with                                  |
//! |----------------|-----------------|----------------------------------------------|
//! | `{state}`      | expand, score, reflect | question plus steps accumulated so far |
//! | `{siblings}`   | expand          | bulleted steps already generated, or `(none)` |
//! | `{reflection}` | expand          | parent node's guidance, or `(none)`          |
//! | `{action}`     | score, reflect  | the step under evaluation                     |
//! | `{end_marker}` | reflect         | the terminal marker, `<end>` by default       |
//! | `{question}`   | code            | the question statement                        |
//! | `{thinking}`   | code            | numbered reasoning steps                      |

use super::{GenerationRequest, Phase, SectionLabel};

const EXPAND: &str = include_str!("../../prompts/expand.txt");
const SCORE: &str = include_str!("../../prompts/score.txt");
const REFLECT: &str = include_str!("../../prompts/reflect.txt");
const CODE: &str = include_str!("../../prompts/code.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatPrompt {
    pub system: String,
    pub user: String,
}

pub fn template(phase: Phase) -> &'static str {
    match phase {
        Phase::Expand => EXPAND,
        Phase::Score => SCORE,
        Phase::Reflect => REFLECT,
        Phase::Code => CODE,
    }
}

fn or_none(text: Option<&str>) -> String {
    match text.map(str::trim) {
        Some(t) if !t.is_empty() => t.to_string(),
        _ => "(none)".to_string(),
    }
}

pub fn render(request: &GenerationRequest, end_marker: &str) -> ChatPrompt {
    let tpl = template(request.phase);
    let (system, user) = tpl.split_once("\n---\n").unwrap_or(("", tpl));
    let siblings = request.all(SectionLabel::Sibling);
    let siblings = if siblings.is_empty() {
        "(none)".to_string()
    } else {
        siblings.iter().map(|s| format!("- {s}")).collect::<Vec<_>>().join("\n")
    };
    let user = user
        .replace("{state}", request.first(SectionLabel::State).unwrap_or_default())
        .replace("{siblings}", &siblings)
        .replace("{reflection}", &or_none(request.first(SectionLabel::Reflection)))
        .replace("{action}", request.first(SectionLabel::Step).unwrap_or_default())
        .replace("{question}", request.first(SectionLabel::Question).unwrap_or_default())
        .replace("{thinking}", request.first(SectionLabel::Thinking).unwrap_or_default())
        .replace("{end_marker}", end_marker);
    ChatPrompt {
        system: system.trim().to_string(),
        user: user.trim_end().to_string(),
    }
}
