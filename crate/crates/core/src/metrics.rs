//! String similarity metrics used as attack fitness and report statistics.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("unknown metric `{0}` (expected levenshtein, neg-levenshtein, chrf, token-f1 or accuracy)")]
    Unknown(String),
    #[error("accuracy of an empty label sequence is undefined")]
    EmptyLabels,
}

/// Edit distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// chrF knobs. Defaults follow the common scoring-tool setup: character
/// order 6, recall weight β = 2, whitespace removed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChrfConfig {
    pub char_order: usize,
    pub beta: f64,
    pub strip_whitespace: bool,
}

impl Default for ChrfConfig {
    fn default() -> Self {
        Self {
            char_order: 6,
            beta: 2.0,
            strip_whitespace: true,
        }
    }
}

fn ngram_counts(chars: &[char], n: usize) -> HashMap<&[char], usize> {
    let mut counts = HashMap::new();
    if chars.len() >= n {
        for w in chars.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Character n-gram F-score in `[0, 100]` with the default configuration.
pub fn chrf(hypothesis: &str, reference: &str) -> f64 {
    chrf_with(hypothesis, reference, &ChrfConfig::default())
}

/// Character n-gram F-score.
///
/// Precision and recall are computed per order from clipped n-gram overlap,
/// macro-averaged over the orders where both strings have at least one
/// n-gram, then combined as `(1+β²)PR / (β²P + R)`.
pub fn chrf_with(hypothesis: &str, reference: &str, cfg: &ChrfConfig) -> f64 {
    assert!(cfg.char_order >= 1, "char_order must be at least 1");
    assert!(cfg.beta > 0.0, "beta must be positive");
    let prep = |s: &str| -> Vec<char> {
        s.chars()
            .filter(|c| !(cfg.strip_whitespace && c.is_whitespace()))
            .collect()
    };
    let hyp = prep(hypothesis);
    let refs = prep(reference);

    let (mut p_sum, mut r_sum, mut orders) = (0.0, 0.0, 0usize);
    for n in 1..=cfg.char_order {
        if hyp.len() < n || refs.len() < n {
            break;
        }
        let hc = ngram_counts(&hyp, n);
        let rc = ngram_counts(&refs, n);
        let matched: usize = hc
            .iter()
            .map(|(g, &c)| c.min(rc.get(g).copied().unwrap_or(0)))
            .sum();
        p_sum += matched as f64 / (hyp.len() + 1 - n) as f64;
        r_sum += matched as f64 / (refs.len() + 1 - n) as f64;
        orders += 1;
    }
    if orders == 0 {
        return 0.0;
    }
    let p = p_sum / orders as f64;
    let r = r_sum / orders as f64;
    let b2 = cfg.beta * cfg.beta;
    let denom = b2 * p + r;
    if denom == 0.0 {
        0.0
    } else {
        100.0 * (1.0 + b2) * p * r / denom
    }
}

fn normalize_answer(s: &str) -> Vec<String> {
    let lowered: String = s
        .to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    lowered
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .map(str::to_owned)
        .collect()
}

/// Token-level F1 with answer normalization (lowercase, punctuation and
/// articles removed). Two empty token lists score 1.
pub fn token_f1(prediction: &str, gold: &str) -> f64 {
    let pred = normalize_answer(prediction);
    let gold = normalize_answer(gold);
    if pred.is_empty() && gold.is_empty() {
        return 1.0;
    }
    let mut gold_counts: HashMap<&str, usize> = HashMap::new();
    for t in &gold {
        *gold_counts.entry(t).or_insert(0) += 1;
    }
    let mut same = 0usize;
    for t in &pred {
        if let Some(c) = gold_counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                same += 1;
            }
        }
    }
    if same == 0 {
        return 0.0;
    }
    let p = same as f64 / pred.len() as f64;
    let r = same as f64 / gold.len() as f64;
    2.0 * p * r / (p + r)
}

/// Fraction of `(predicted, gold)` pairs that match exactly.
pub fn accuracy<L: PartialEq>(labels: &[(L, L)]) -> Result<f64, MetricError> {
    if labels.is_empty() {
        return Err(MetricError::EmptyLabels);
    }
    let hits = labels.iter().filter(|(p, g)| p == g).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Metric identifiers accepted on the command line and in configs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Levenshtein,
    NegLevenshtein,
    Chrf,
    TokenF1,
    Accuracy,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Levenshtein,
        Metric::NegLevenshtein,
        Metric::Chrf,
        Metric::TokenF1,
        Metric::Accuracy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Levenshtein => "levenshtein",
            Metric::NegLevenshtein => "neg-levenshtein",
            Metric::Chrf => "chrf",
            Metric::TokenF1 => "token-f1",
            Metric::Accuracy => "accuracy",
        }
    }

    pub fn higher_is_better(self) -> bool {
        !matches!(self, Metric::Levenshtein)
    }

    /// Scores one output against one reference. `accuracy` is exact match
    /// (1 or 0) at the single-pair level.
    pub fn score(self, output: &str, reference: &str) -> MetricValue {
        let value = match self {
            Metric::Levenshtein => levenshtein(output, reference) as f64,
            Metric::NegLevenshtein => -(levenshtein(output, reference) as f64),
            Metric::Chrf => chrf(output, reference),
            Metric::TokenF1 => token_f1(output, reference),
            Metric::Accuracy => f64::from(u8::from(output == reference)),
        };
        MetricValue {
            metric: self,
            value,
            higher_is_better: self.higher_is_better(),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| MetricError::Unknown(s.to_owned()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub metric: Metric,
    pub value: f64,
    pub higher_is_better: bool,
}

impl MetricValue {
    /// The value oriented so that larger means more similar. Distances are
    /// negated.
    pub fn similarity(&self) -> f64 {
        if self.higher_is_better {
            self.value
        } else {
            -self.value
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn levenshtein_examples() {
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert_eq!(levenshtein("flaw", "lawn"), 2);
        assert_eq!(levenshtein("", "héllo"), 5);
        assert_eq!(levenshtein("abc", "abc"), 0);
        assert_eq!(levenshtein("a\u{301}", "a"), 1);
    }

    #[test]
    fn chrf_edges() {
        assert_eq!(chrf("", "abc"), 0.0);
        assert_eq!(chrf("abc", ""), 0.0);
        assert!((chrf("a", "a") - 100.0).abs() < 1e-12);
        assert!((chrf("the cat", "thecat") - 100.0).abs() < 1e-12);
        assert_eq!(chrf("xyz", "abc"), 0.0);
    }

    #[test]
    fn chrf_custom_config() {
        let cfg = ChrfConfig {
            char_order: 1,
            beta: 1.0,
            strip_whitespace: false,
        };
        // unigram: hyp "ab" vs ref "ac": 1 match, P = R = 1/2.
        assert!((chrf_with("ab", "ac", &cfg) - 50.0).abs() < 1e-12);
        assert!(chrf_with("a b", "ab", &cfg) < 100.0);
    }

    #[test]
    fn token_f1_examples() {
        assert_eq!(token_f1("the cat sat", "cat sat"), 1.0);
        assert!((token_f1("cat sat mat", "cat ran") - 0.4).abs() < 1e-12);
        assert_eq!(token_f1("", ""), 1.0);
        assert_eq!(token_f1("the", "a"), 1.0);
        assert_eq!(token_f1("cat", ""), 0.0);
        assert_eq!(token_f1("Cat!", "cat"), 1.0);
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[("a", "a"), ("b", "b")]), Ok(1.0));
        assert_eq!(accuracy(&[("a", "b"), ("b", "a")]), Ok(0.0));
        assert_eq!(accuracy(&[("a", "a"), ("b", "a")]), Ok(0.5));
        assert_eq!(accuracy::<&str>(&[]), Err(MetricError::EmptyLabels));
    }

    #[test]
    fn metric_names_roundtrip() {
        for m in Metric::ALL {
            assert_eq!(m.name().parse::<Metric>(), Ok(m));
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.name()));
        }
        assert!("bleu".parse::<Metric>().is_err());
    }

    #[test]
    fn similarity_orientation() {
        assert_eq!(Metric::Levenshtein.score("ab", "ba").similarity(), -2.0);
        assert_eq!(Metric::NegLevenshtein.score("ab", "ba").similarity(), -2.0);
        assert_eq!(Metric::Chrf.score("ab", "ab").similarity(), 100.0);
    }

    proptest! {
        #[test]
        fn levenshtein_is_a_metric(a in "[abcd]{0,8}", b in "[abcd]{0,8}", c in "[abcd]{0,8}") {
            prop_assert_eq!(levenshtein(&a, &b), levenshtein(&b, &a));
            prop_assert_eq!(levenshtein(&a, &a), 0);
            prop_assert!(levenshtein(&a, &c) <= levenshtein(&a, &b) + levenshtein(&b, &c));
        }

        #[test]
        fn chrf_bounds_and_whitespace(a in "[ab ]{0,10}", b in "[ab ]{0,10}") {
            let v = chrf(&a, &b);
            prop_assert!((0.0..=100.0).contains(&v));
            let spaced: String = a.chars().flat_map(|c| [c, ' ']).collect();
            prop_assert!((chrf(&spaced, &b) - v).abs() < 1e-12);
        }

        #[test]
        fn token_f1_symmetric(a in "[a-c ]{0,12}", b in "[a-c ]{0,12}") {
            prop_assert!((token_f1(&a, &b) - token_f1(&b, &a)).abs() < 1e-12);
        }
    }
}
