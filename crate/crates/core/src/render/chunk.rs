//! Greedy word wrap of text across fixed-width canvases.
//!
//! Words are kept whole when they fit; a word wider than the canvas is split
//! at cell boundaries, never between a base character and its marks.
//! Whitespace between chunks lives in the plan, not in the chunks, so model
//! outputs can be edge-trimmed before joining.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::perturb::is_combining_mark;

/// Number of canvas cells `text` occupies: one per non-mark scalar.
pub fn text_width(text: &str) -> usize {
    text.chars().filter(|&c| !is_combining_mark(c)).count()
}

/// How two consecutive chunks are joined.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Join {
    /// The source had this whitespace (usually a single space) between them.
    Whitespace(String),
    /// A word was split here; join with nothing.
    Split,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkPlan {
    pub chunks: Vec<String>,
    /// `joins[k]` sits between `chunks[k]` and `chunks[k + 1]`.
    pub joins: Vec<Join>,
    /// Whitespace before the first chunk.
    pub leading: String,
    /// Whitespace after the last chunk.
    pub trailing: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("{outputs} outputs for a plan of {chunks} chunks")]
pub struct ReassembleError {
    pub outputs: usize,
    pub chunks: usize,
}

/// A base scalar plus its trailing marks. `width` is 0 only for marks at the
/// very start of the text.
struct Cluster<'a> {
    text: &'a str,
    width: usize,
    blank: bool,
}

fn clusters(text: &str) -> Vec<Cluster<'_>> {
    let mut out: Vec<Cluster<'_>> = Vec::new();
    let mut start = 0;
    for (pos, c) in text.char_indices() {
        if pos > 0 && !is_combining_mark(c) {
            out.push(make_cluster(&text[start..pos]));
            start = pos;
        }
    }
    if start < text.len() {
        out.push(make_cluster(&text[start..]));
    }
    out
}

fn make_cluster(text: &str) -> Cluster<'_> {
    let first = text.chars().next().expect("clusters are non-empty");
    Cluster {
        text,
        width: usize::from(!is_combining_mark(first)),
        blank: first.is_whitespace(),
    }
}

struct Builder {
    width: usize,
    plan: ChunkPlan,
    current: String,
    current_width: usize,
    open: bool,
}

impl Builder {
    fn flush(&mut self, join: Join) {
        self.plan.chunks.push(std::mem::take(&mut self.current));
        self.plan.joins.push(join);
        self.current_width = 0;
    }

    fn place_word(&mut self, word: &[Cluster<'_>]) {
        for cl in word {
            if self.current_width + cl.width > self.width {
                self.flush(Join::Split);
            }
            self.current.push_str(cl.text);
            self.current_width += cl.width;
        }
        self.open = true;
    }
}

/// Splits `text` into chunks of at most `width` cells.
pub fn chunk(text: &str, width: usize) -> ChunkPlan {
    assert!(width >= 2, "canvas width must be at least 2 cells");
    let cl = clusters(text);

    // Alternating runs: (is_blank, start, end) over the cluster list.
    let mut runs: Vec<(bool, usize, usize)> = Vec::new();
    for (n, c) in cl.iter().enumerate() {
        match runs.last_mut() {
            Some((blank, _, end)) if *blank == c.blank => *end = n + 1,
            _ => runs.push((c.blank, n, n + 1)),
        }
    }
    let concat = |s: usize, e: usize| -> String { cl[s..e].iter().map(|c| c.text).collect() };

    let mut b = Builder {
        width,
        plan: ChunkPlan::default(),
        current: String::new(),
        current_width: 0,
        open: false,
    };
    let mut runs = runs.as_slice();
    if let Some(&(true, s, e)) = runs.first() {
        b.plan.leading = concat(s, e);
        runs = &runs[1..];
    }
    if let Some(&(true, s, e)) = runs.last() {
        b.plan.trailing = concat(s, e);
        runs = &runs[..runs.len() - 1];
    }

    let mut gap: Option<(String, usize)> = None;
    for &(blank, s, e) in runs {
        if blank {
            gap = Some((concat(s, e), e - s));
            continue;
        }
        let word = &cl[s..e];
        let word_width: usize = word.iter().map(|c| c.width).sum();
        match gap.take() {
            None => b.place_word(word),
            Some((ws, ws_width)) => {
                if b.current_width + ws_width + word_width <= width {
                    b.current.push_str(&ws);
                    b.current_width += ws_width;
                } else {
                    b.flush(Join::Whitespace(ws));
                }
                b.place_word(word);
            }
        }
    }
    if b.open {
        b.plan.chunks.push(b.current);
    } else {
        b.plan.joins.clear();
    }
    b.plan
}

/// Joins per-chunk model outputs back into one string, trimming whitespace
/// the model produced at each output's edges.
pub fn reassemble<S: AsRef<str>>(outputs: &[S], plan: &ChunkPlan) -> Result<String, ReassembleError> {
    if outputs.len() != plan.chunks.len() {
        return Err(ReassembleError {
            outputs: outputs.len(),
            chunks: plan.chunks.len(),
        });
    }
    let mut out = plan.leading.clone();
    for (n, o) in outputs.iter().enumerate() {
        if n > 0 {
            if let Join::Whitespace(ws) = &plan.joins[n - 1] {
                out.push_str(ws);
            }
        }
        out.push_str(o.as_ref().trim());
    }
    out.push_str(&plan.trailing);
    Ok(out)
}
