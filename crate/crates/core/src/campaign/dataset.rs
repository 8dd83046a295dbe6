use std::collections::HashSet;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

/// One input to attack.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub id: String,
    pub input: String,
    pub reference: Option<String>,
    pub label: Option<String>,
    /// 1-based source line.
    pub line: usize,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read dataset {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("dataset line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl DatasetError {
    pub fn at(line: usize, message: impl Into<String>) -> Self {
        DatasetError::Parse {
            line,
            message: message.into(),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExample {
    #[serde(default)]
    id: Option<serde_json::Value>,
    input: String,
    #[serde(default)]
    reference: Option<String>,
    #[serde(default)]
    label: Option<String>,
}

fn auto_id(line: usize) -> String {
    format!("{line:06}")
}

/// Parses JSON lines (`{"id", "input", "reference"?, "label"?}`) or plain
/// text with one input per line. The format is chosen by the first
/// non-blank line. Blank lines are skipped in both formats.
pub fn parse_dataset(contents: &str) -> Result<Vec<Example>, DatasetError> {
    let jsonl = contents
        .lines()
        .find(|l| !l.trim().is_empty())
        .is_some_and(|l| l.trim_start().starts_with('{'));
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (n, raw_line) in contents.lines().enumerate() {
        let line = n + 1;
        if raw_line.trim().is_empty() {
            continue;
        }
        let example = if jsonl {
            let raw: RawExample =
                serde_json::from_str(raw_line).map_err(|e| DatasetError::at(line, e.to_string()))?;
            let id = match raw.id {
                None => auto_id(line),
                Some(serde_json::Value::String(s)) => s,
                Some(serde_json::Value::Number(n)) => n.to_string(),
                Some(other) => return Err(DatasetError::at(line, format!("id must be a string or number, got {other}"))),
            };
            Example {
                id,
                input: raw.input,
                reference: raw.reference,
                label: raw.label,
                line,
            }
        } else {
            Example {
                id: auto_id(line),
                input: raw_line.to_owned(),
                reference: None,
                label: None,
                line,
            }
        };
        if !seen.insert(example.id.clone()) {
            return Err(DatasetError::at(line, format!("duplicate id `{}`", example.id)));
        }
        out.push(example);
    }
    Ok(out)
}

pub fn load_dataset(path: &Path) -> Result<Vec<Example>, DatasetError> {
    let contents = std::fs::read_to_string(path).map_err(|source| DatasetError::Read {
        path: path.display().to_string(),
        source,
    })?;
    parse_dataset(&contents)
}
