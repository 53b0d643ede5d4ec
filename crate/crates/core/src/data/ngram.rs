//! Word n-gram overlap and benchmark decontamination.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::QuestionItem;

pub const DEFAULT_NGRAM: usize = 10;
pub const DEFAULT_THRESHOLD: f64 = 0.3;

/// Lowercases, removes ASCII punctuation and splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| !c.is_ascii_punctuation())
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

/// Set of word n-grams. A text shorter than `n` tokens yields its whole token
/// sequence as a single gram; an empty text yields nothing.
pub fn ngrams(tokens: &[String], n: usize) -> HashSet<Vec<String>> {
    let n = n.max(1);
    if tokens.is_empty() {
        HashSet::new()
    } else if tokens.len() < n {
        HashSet::from([tokens.to_vec()])
    } else {
        tokens.windows(n).map(<[String]>::to_vec).collect()
    }
}

/// Fraction of `a`'s n-grams that also occur in `b`. Asymmetric: `a` is the
/// training text being screened, `b` the benchmark text.
pub fn ngram_similarity(a: &str, b: &str, n: usize) -> f64 {
    let ga = ngrams(&tokenize(a), n);
    if ga.is_empty() {
        return 0.0;
    }
    let gb = ngrams(&tokenize(b), n);
    let shared = ga.iter().filter(|g| gb.contains(*g)).count();
    shared as f64 / ga.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Removal {
    pub question_id: String,
    pub benchmark_id: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContaminationReport {
    pub ngram: usize,
    pub threshold: f64,
    pub input_count: usize,
    pub retained_count: usize,
    pub removed: Vec<Removal>,
}

impl ContaminationReport {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "# decontamination report\nngram = {}\nthreshold = {}\ninput = {}\nretained = {}\nremoved = {}\n",
            self.ngram,
            self.threshold,
            self.input_count,
            self.retained_count,
            self.removed.len()
        );
        for r in &self.removed {
            out.push_str(&format!("{}\t{}\t{:.4}\n", r.question_id, r.benchmark_id, r.similarity));
        }
        out
    }
}

/// Drops every training question whose best similarity against any benchmark
/// question is strictly above `threshold`.
pub fn decontaminate(
    train: &[QuestionItem],
    benchmarks: &[QuestionItem],
    n: usize,
    threshold: f64,
) -> (Vec<QuestionItem>, ContaminationReport) {
    let bench_grams: Vec<(&str, HashSet<Vec<String>>)> = benchmarks
        .iter()
        .map(|b| (b.id.as_str(), ngrams(&tokenize(&b.statement), n)))
        .collect();
    let mut retained = Vec::new();
    let mut removed = Vec::new();
    for q in train {
        let grams = ngrams(&tokenize(&q.statement), n);
        let mut best: Option<(&str, f64)> = None;
        if !grams.is_empty() {
            for (bid, bg) in &bench_grams {
                let shared = grams.iter().filter(|g| bg.contains(*g)).count();
                let sim = shared as f64 / grams.len() as f64;
                if best.is_none_or(|(_, s)| sim > s) {
                    best = Some((bid, sim));
                }
            }
        }
        match best {
            Some((bid, sim)) if sim > threshold => removed.push(Removal {
                question_id: q.id.clone(),
                benchmark_id: bid.to_string(),
                similarity: sim,
            }),
            _ => retained.push(q.clone()),
        }
    }
    let report = ContaminationReport {
        ngram: n,
        threshold,
        input_count: train.len(),
        retained_count: retained.len(),
        removed,
    };
    (retained, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn words(prefix: &str, count: usize) -> String {
        (0..count).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>().join(" ")
    }

    // Brute-force containment, independent of the HashSet path above.
    fn brute_containment(a: &[&str], b: &[&str], n: usize) -> f64 {
        let mut grams_a: Vec<Vec<&str>> = Vec::new();
        for w in a.windows(n) {
            if !grams_a.contains(&w.to_vec()) {
                grams_a.push(w.to_vec());
            }
        }
        let shared = grams_a
            .iter()
            .filter(|g| b.windows(n).any(|w| w == g.as_slice()))
            .count();
        shared as f64 / grams_a.len() as f64
    }

    #[test]
    fn identity_and_disjoint() {
        let a = words("w", 15);
        assert_eq!(ngram_similarity(&a, &a, 10), 1.0);
        assert_eq!(ngram_similarity(&a, &words("v", 15), 10), 0.0);
        assert_eq!(ngram_similarity("", &a, 10), 0.0);
    }

    #[test]
    fn four_of_ten_grams_shared() {
        // 19 distinct tokens give 10 distinct 10-grams; b contains the first 13
        // tokens, i.e. grams 0..=3.
        let a: Vec<String> = (0..19).map(|i| format!("t{i}")).collect();
        let mut b: Vec<String> = a[..13].to_vec();
        b.extend((0..8).map(|i| format!("x{i}")));
        let (ra, rb): (Vec<&str>, Vec<&str>) =
            (a.iter().map(String::as_str).collect(), b.iter().map(String::as_str).collect());
        let expected = brute_containment(&ra, &rb, 10);
        assert_eq!(expected, 0.4);
        assert_eq!(ngram_similarity(&a.join(" "), &b.join(" "), 10), expected);
    }

    #[test]
    fn short_texts_use_whole_sequence() {
        assert_eq!(ngram_similarity("Reverse a string!", "reverse a string", 10), 1.0);
        assert_eq!(ngram_similarity("reverse a string", "reverse a list", 10), 0.0);
    }

    #[test]
    fn exact_threshold_is_retained() {
        let a: Vec<String> = (0..19).map(|i| format!("t{i}")).collect();
        let b: Vec<String> = a[..12].to_vec();
        let sim = ngram_similarity(&a.join(" "), &b.join(" "), 10);
        assert_eq!(sim, 0.3);
        let train = vec![QuestionItem::new("t", a.join(" "))];
        let bench = vec![QuestionItem::new("b", b.join(" "))];
        let (kept, report) = decontaminate(&train, &bench, 10, 0.3);
        assert_eq!(kept.len(), 1);
        assert!(report.removed.is_empty());
        let (kept, report) = decontaminate(&train, &bench, 10, 0.0);
        assert!(kept.is_empty());
        assert_eq!(report.removed[0].benchmark_id, "b");
    }

    proptest! {
        #[test]
        fn case_and_whitespace_invariant(tokens in proptest::collection::vec("[a-z]{1,6}", 1..30),
                                         other in proptest::collection::vec("[a-z]{1,6}", 0..30)) {
            let a = tokens.join(" ");
            let b = other.join(" ");
            let a_noisy = tokens.iter().map(|t| t.to_uppercase()).collect::<Vec<_>>().join("  \t ");
            let b_noisy = format!("  {}\n", other.join("\n\n"));
            prop_assert_eq!(ngram_similarity(&a, &a, 10), 1.0);
            prop_assert_eq!(ngram_similarity(&a, &b, 10), ngram_similarity(&a_noisy, &b_noisy, 10));
            let brute = brute_containment(
                &tokenize(&a).iter().map(String::as_str).collect::<Vec<_>>(),
                &tokenize(&b).iter().map(String::as_str).collect::<Vec<_>>(), 10.min(tokens.len()));
            if tokens.len() >= 10 {
                prop_assert!((ngram_similarity(&a, &b, 10) - brute).abs() < 1e-12);
            }
        }
    }
}
