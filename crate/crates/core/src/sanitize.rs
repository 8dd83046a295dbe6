//! Removal and detection of combining diacritical marks in model inputs.

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::perturb::{COMBINING_BLOCK_END, COMBINING_BLOCK_START};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SanitizeMode {
    /// Remove in-range scalars and nothing else.
    #[default]
    StripOnly,
    /// NFD, strip, then NFC. Also removes marks from precomposed letters.
    DecomposeStripRecompose,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SanitizePolicy {
    pub mode: SanitizeMode,
    /// Inclusive code-point range to remove.
    pub range: (u32, u32),
}

impl Default for SanitizePolicy {
    fn default() -> Self {
        Self {
            mode: SanitizeMode::StripOnly,
            range: (COMBINING_BLOCK_START, COMBINING_BLOCK_END),
        }
    }
}

impl SanitizePolicy {
    pub fn with_mode(mode: SanitizeMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    fn matches(&self, c: char) -> bool {
        (self.range.0..=self.range.1).contains(&(c as u32))
    }
}

pub fn sanitize(text: &str, policy: &SanitizePolicy) -> String {
    match policy.mode {
        SanitizeMode::StripOnly => text.chars().filter(|&c| !policy.matches(c)).collect(),
        SanitizeMode::DecomposeStripRecompose => text
            .nfd()
            .filter(|&c| !policy.matches(c))
            .nfc()
            .collect(),
    }
}

/// In-range marks found in a text, by scalar index.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Detection {
    pub count: usize,
    pub positions: Vec<usize>,
}

pub fn detect(text: &str, policy: &SanitizePolicy) -> Detection {
    let positions: Vec<usize> = text
        .chars()
        .enumerate()
        .filter(|&(_, c)| policy.matches(c))
        .map(|(n, _)| n)
        .collect();
    Detection {
        count: positions.len(),
        positions,
    }
}
