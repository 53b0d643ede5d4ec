//! Removal of fenced code from natural-language reasoning.

use std::sync::LazyLock;

use regex::Regex;

// An opening fence up to the next fence, or to the end of the text when the
// block is never closed.
static FENCE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)```.*?(?:```|\z)").unwrap());
static BLANK_RUN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\n[ \t]*(?:\n[ \t]*)+\n").unwrap());
static FIRST_BLOCK: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?s)```[^\n`]*\n(.*?)```").unwrap());

/// Deletes every fenced code block and collapses the blank-line runs left
/// behind into a single blank line. Idempotent.
pub fn strip_code(text: &str) -> String {
    let mut cur = text.to_string();
    loop {
        let removed = FENCE.replace_all(&cur, "");
        let collapsed = BLANK_RUN.replace_all(&removed, "\n\n");
        let next = collapsed.trim().to_string();
        if next == cur {
            return next;
        }
        cur = next;
    }
}

/// Body of the first fenced block, without its fences or language tag.
pub fn first_fenced_block(text: &str) -> Option<String> {
    FIRST_BLOCK
        .captures(text)
        .map(|c| c[1].trim_end_matches('\n').to_string())
}

pub fn count_fenced_blocks(text: &str) -> usize {
    FIRST_BLOCK.find_iter(text).count()
}

pub fn contains_fence(text: &str) -> bool {
    text.contains("```")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn removes_single_fence() {
        let text = "Use two pointers.\n```\nfor i in range(n):\n    pass\n```";
        assert_eq!(strip_code(text), "Use two pointers.");
    }

    #[test]
    fn keeps_clean_text() {
        let text = "First sort.\nThen scan once.";
        assert_eq!(strip_code(text), text);
    }

    #[test]
    fn language_tags_and_unclosed_blocks() {
        let text = "a\n```python\nx = 1\n```\n\n\n\nb\n```rust\nfn f() {}";
        assert_eq!(strip_code(text), "a\n\nb");
    }

    #[test]
    fn first_block_only() {
        let text = "intro\n```python\ndef f():\n    return 1\n```\nmore\n```\nsecond\n```";
        assert_eq!(first_fenced_block(text).unwrap(), "def f():\n    return 1");
        assert_eq!(count_fenced_blocks(text), 2);
        assert_eq!(first_fenced_block("no code here"), None);
    }

    proptest! {
        #[test]
        fn idempotent_and_fence_free(parts in proptest::collection::vec(
            prop_oneof![
                "[a-z ]{0,12}".prop_map(|s| s),
                Just("```".to_string()),
                Just("```python\n".to_string()),
                Just("\n".to_string()),
                Just("`".to_string()),
                Just("\n\n\n".to_string()),
            ], 0..24)) {
            let text: String = parts.concat();
            let once = strip_code(&text);
            prop_assert!(!contains_fence(&once));
            prop_assert_eq!(strip_code(&once), once);
        }
    }
}
