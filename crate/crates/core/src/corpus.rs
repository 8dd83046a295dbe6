//! Small bundled datasets for smoke runs and tests.

use crate::campaign::{parse_dataset, Example};

/// Fifty short ASCII sentences, one per line.
pub const SENTENCES: &str = include_str!("../data/sentences.txt");

/// Twenty labeled examples for the toy toxicity classifier, as JSON lines.
pub const TOXIC: &str = include_str!("../data/toxic.jsonl");

pub fn sentences() -> Vec<&'static str> {
    SENTENCES.lines().filter(|l| !l.is_empty()).collect()
}

pub fn toxic_examples() -> Vec<Example> {
    parse_dataset(TOXIC).expect("bundled toxic set parses")
}
