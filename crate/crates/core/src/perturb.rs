//! Diacritic alphabet, genomes, and the genome-to-text perturbation.
//!
//! A genome is a fixed-length list of real-valued `(d, i)` pairs. Each pair
//! selects a combining mark (`d`) and an insertion position (`i`, measured in
//! Unicode scalar values). Pairs whose rounded position is negative are
//! skipped, so a genome of length `n` inserts anywhere from zero to `n` marks.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// First code point of the combining diacritical marks block.
pub const COMBINING_BLOCK_START: u32 = 0x0300;
/// Last code point of the combining diacritical marks block.
pub const COMBINING_BLOCK_END: u32 = 0x036F;

/// True for scalars in the combining diacritical marks block (U+0300..=U+036F).
pub fn is_combining_mark(c: char) -> bool {
    (COMBINING_BLOCK_START..=COMBINING_BLOCK_END).contains(&(c as u32))
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AlphabetError {
    #[error("alphabet is empty")]
    Empty,
    #[error("U+{0:04X} is outside the combining diacritical marks block")]
    OutOfBlock(u32),
    #[error("U+{0:04X} appears more than once")]
    Duplicate(u32),
}

/// Ordered set of combining marks the attack may inject. Index `d` addresses
/// `marks()[d]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<char>", into = "Vec<char>")]
pub struct DiacriticAlphabet {
    marks: Vec<char>,
}

impl DiacriticAlphabet {
    pub fn new(marks: Vec<char>) -> Result<Self, AlphabetError> {
        if marks.is_empty() {
            return Err(AlphabetError::Empty);
        }
        for (n, &m) in marks.iter().enumerate() {
            if !is_combining_mark(m) {
                return Err(AlphabetError::OutOfBlock(m as u32));
            }
            if marks[..n].contains(&m) {
                return Err(AlphabetError::Duplicate(m as u32));
            }
        }
        Ok(Self { marks })
    }

    pub fn marks(&self) -> &[char] {
        &self.marks
    }

    pub fn len(&self) -> usize {
        self.marks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marks.is_empty()
    }

    pub fn contains(&self, c: char) -> bool {
        self.marks.contains(&c)
    }

    /// Mark addressed by a continuous selector: `floor(d)` clamped to the
    /// valid index range.
    pub fn select(&self, d: f64) -> char {
        let idx = if d.is_nan() || d < 0.0 {
            0
        } else {
            (d.floor() as usize).min(self.marks.len() - 1)
        };
        self.marks[idx]
    }
}

impl Default for DiacriticAlphabet {
    /// U+0300..=U+0346 and U+0360..=U+0361, the marks covered by the common
    /// Arial Unicode font (73 marks).
    fn default() -> Self {
        let marks = (0x0300..=0x0346u32)
            .chain(0x0360..=0x0361)
            .filter_map(char::from_u32)
            .collect();
        Self { marks }
    }
}

impl TryFrom<Vec<char>> for DiacriticAlphabet {
    type Error = AlphabetError;

    fn try_from(marks: Vec<char>) -> Result<Self, Self::Error> {
        Self::new(marks)
    }
}

impl From<DiacriticAlphabet> for Vec<char> {
    fn from(a: DiacriticAlphabet) -> Self {
        a.marks
    }
}

/// One `(mark selector, insertion position)` pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gene {
    pub d: f64,
    pub i: f64,
}

impl Gene {
    pub const fn new(d: f64, i: f64) -> Self {
        Self { d, i }
    }

    /// Projects the gene into `d ∈ [0, alphabet_len)`, `i ∈ [-1, text_len]`.
    /// NaN components map to the lower bound.
    pub fn clamped(self, alphabet_len: usize, text_len: usize) -> Self {
        let d_max = below(alphabet_len as f64);
        let d = if self.d.is_nan() { 0.0 } else { self.d.clamp(0.0, d_max) };
        let i = if self.i.is_nan() {
            -1.0
        } else {
            self.i.clamp(-1.0, text_len as f64)
        };
        Self { d, i }
    }

    /// Rounded insertion position, or `None` when the gene is skipped.
    pub fn position(&self) -> Option<usize> {
        let r = self.i.round();
        (r >= 0.0).then_some(r as usize)
    }
}

/// Largest f64 strictly below a positive `x`.
fn below(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    f64::from_bits(x.to_bits() - 1)
}

/// Fixed-length gene sequence. For a budget `β` the attack uses `β + 1` genes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Genome {
    genes: Vec<Gene>,
}

impl Genome {
    pub fn new(genes: Vec<Gene>) -> Self {
        Self { genes }
    }

    /// Genome whose every gene is skipped.
    pub fn skipping(len: usize) -> Self {
        Self::new(vec![Gene::new(0.0, -1.0); len])
    }

    pub fn genes(&self) -> &[Gene] {
        &self.genes
    }

    pub(crate) fn genes_mut(&mut self) -> &mut [Gene] {
        &mut self.genes
    }

    pub fn len(&self) -> usize {
        self.genes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genes.is_empty()
    }

    pub fn clamp_in_place(&mut self, alphabet_len: usize, text_len: usize) {
        for g in &mut self.genes {
            *g = g.clamped(alphabet_len, text_len);
        }
    }
}

impl FromIterator<Gene> for Genome {
    fn from_iter<T: IntoIterator<Item = Gene>>(iter: T) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

/// Applies `genome` to `text`.
///
/// Genes are applied in order against the evolving string, so every accepted
/// insertion shifts later positions by one. Positions round half away from
/// zero and are clamped into `[0, len(current)]`.
pub fn perturb(text: &str, genome: &Genome, alphabet: &DiacriticAlphabet) -> String {
    let mut scalars: Vec<char> = text.chars().collect();
    for gene in genome.genes() {
        if let Some(pos) = gene.position() {
            let mark = alphabet.select(gene.d);
            let pos = pos.min(scalars.len());
            scalars.insert(pos, mark);
        }
    }
    scalars.into_iter().collect()
}

/// Number of scalars in `text` that belong to `alphabet`.
pub fn count_marks(text: &str, alphabet: &DiacriticAlphabet) -> usize {
    text.chars().filter(|&c| alphabet.contains(c)).count()
}

/// ASCII-safe rendering of a string: every non-ASCII scalar becomes
/// `\u{XXXX}` (uppercase hex, no padding) and a backslash becomes `\\`.
pub fn escape_unicode(text: &str) -> String {
    use fmt::Write;
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            c if c.is_ascii() => out.push(c),
            c => {
                let _ = write!(out, "\\u{{{:X}}}", c as u32);
            }
        }
    }
    out
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("malformed escape at byte {0}")]
pub struct UnescapeError(pub usize);

/// Inverse of [`escape_unicode`].
pub fn unescape_unicode(text: &str) -> Result<String, UnescapeError> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(pos) = rest.find('\\') {
        out.push_str(&rest[..pos]);
        let at = text.len() - rest.len() + pos;
        let tail = &rest[pos + 1..];
        if let Some(after) = tail.strip_prefix('\\') {
            out.push('\\');
            rest = after;
        } else if let Some(body) = tail.strip_prefix("u{") {
            let close = body.find('}').ok_or(UnescapeError(at))?;
            let c = u32::from_str_radix(&body[..close], 16)
                .ok()
                .and_then(char::from_u32)
                .ok_or(UnescapeError(at))?;
            out.push(c);
            rest = &body[close + 1..];
        } else {
            return Err(UnescapeError(at));
        }
    }
    out.push_str(rest);
    Ok(out)
}
