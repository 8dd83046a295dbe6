//! Small deterministic target models: template-matching OCR, a lexicon
//! toxicity classifier and a word-by-word translator. They are served behind
//! the same wire protocol as external models.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::adapter::{ModelRequest, ModelResponse, Payload, Task};
use crate::render::{self, glyphs, Canvas, RenderError};

/// Nearest-template character for every cell, trailing spaces removed.
/// Ties go to the lowest code point.
pub fn toy_ocr(canvas: &Canvas) -> String {
    let mut out: String = canvas.cells().iter().map(|&cell| nearest_glyph(cell)).collect();
    let trimmed = out.trim_end_matches(' ').len();
    out.truncate(trimmed);
    out
}

pub fn nearest_glyph(cell: render::Cell) -> char {
    let mut best = (u32::MAX, ' ');
    for (c, template) in glyphs::all_glyphs() {
        let d = cell.hamming(template);
        if d < best.0 {
            best = (d, c);
        }
    }
    best.1
}

/// Renders `text` across as many `width`-cell canvases as needed, reads each
/// with [`toy_ocr`], and reassembles the result.
pub fn read_text(text: &str, width: usize) -> Result<String, RenderError> {
    let plan = render::chunk(text, width);
    let outputs = plan
        .chunks
        .iter()
        .map(|c| render::render(c, width).map(|canvas| toy_ocr(&canvas)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(render::reassemble(&outputs, &plan).expect("one output per chunk"))
}

pub const TOXIC: &str = "toxic";
pub const NON_TOXIC: &str = "non-toxic";

/// Lexicon logistic classifier: `p(toxic) = σ(bias + Σ weight(word))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToxicLexicon {
    pub weights: BTreeMap<String, f64>,
    pub bias: f64,
}

/// One lexicon hit moves the score from σ(-3) ≈ 0.047 to σ(1) ≈ 0.731, so
/// garbling a single character of the only toxic word flips the label.
pub const DEFAULT_BIAS: f64 = -3.0;
pub const DEFAULT_WEIGHT: f64 = 4.0;

const LEXICON: [&str; 12] = [
    "idiot", "stupid", "moron", "dumb", "loser", "jerk", "fool", "trash", "pathetic", "worthless",
    "hate", "ugly",
];

impl Default for ToxicLexicon {
    fn default() -> Self {
        Self {
            weights: LEXICON.iter().map(|w| (w.to_string(), DEFAULT_WEIGHT)).collect(),
            bias: DEFAULT_BIAS,
        }
    }
}

pub fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| c.is_ascii_punctuation()).to_lowercase())
}

impl ToxicLexicon {
    pub fn score(&self, text: &str) -> f64 {
        let z = self.bias + tokens(text).filter_map(|t| self.weights.get(&t)).sum::<f64>();
        logistic(z)
    }

    pub fn label(&self, text: &str) -> &'static str {
        if self.score(text) >= 0.5 {
            TOXIC
        } else {
            NON_TOXIC
        }
    }

    pub fn probs(&self, text: &str) -> BTreeMap<String, f64> {
        let p = self.score(text);
        BTreeMap::from([(TOXIC.to_string(), p), (NON_TOXIC.to_string(), 1.0 - p)])
    }
}

/// Probability of "toxic" under the default lexicon.
pub fn toy_toxic(text: &str) -> f64 {
    ToxicLexicon::default().score(text)
}

const DICTIONARY: [(&str, &str); 52] = [
    ("hello", "bonjour"),
    ("world", "monde"),
    ("the", "le"),
    ("a", "un"),
    ("cat", "chat"),
    ("dog", "chien"),
    ("house", "maison"),
    ("is", "est"),
    ("are", "sont"),
    ("and", "et"),
    ("or", "ou"),
    ("not", "pas"),
    ("good", "bon"),
    ("bad", "mauvais"),
    ("big", "grand"),
    ("small", "petit"),
    ("red", "rouge"),
    ("blue", "bleu"),
    ("green", "vert"),
    ("black", "noir"),
    ("white", "blanc"),
    ("water", "eau"),
    ("bread", "pain"),
    ("wine", "vin"),
    ("book", "livre"),
    ("car", "voiture"),
    ("city", "ville"),
    ("day", "jour"),
    ("night", "nuit"),
    ("sun", "soleil"),
    ("moon", "lune"),
    ("tree", "arbre"),
    ("flower", "fleur"),
    ("friend", "ami"),
    ("man", "homme"),
    ("woman", "femme"),
    ("child", "enfant"),
    ("eats", "mange"),
    ("drinks", "boit"),
    ("sees", "voit"),
    ("reads", "lit"),
    ("runs", "court"),
    ("sleeps", "dort"),
    ("loves", "aime"),
    ("i", "je"),
    ("you", "tu"),
    ("he", "il"),
    ("she", "elle"),
    ("we", "nous"),
    ("they", "ils"),
    ("yes", "oui"),
    ("thank", "merci"),
];

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Word-by-word English to French lookup. Unknown words pass through; an
/// initial capital carries over; edge punctuation is kept.
pub fn toy_translate(text: &str) -> String {
    text.split_whitespace()
        .map(|token| {
            let start = token.len() - token.trim_start_matches(|c: char| c.is_ascii_punctuation()).len();
            let end = token.trim_end_matches(|c: char| c.is_ascii_punctuation()).len().max(start);
            let core = &token[start..end];
            let lower = core.to_lowercase();
            let translated = match DICTIONARY.iter().find(|(en, _)| *en == lower) {
                Some((_, fr)) if core.chars().next().is_some_and(char::is_uppercase) => capitalize(fr),
                Some((_, fr)) => fr.to_string(),
                None => core.to_string(),
            };
            format!("{}{}{}", &token[..start], translated, &token[end..])
        })
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToyModel {
    /// generate: returns the text it reads.
    Ocr,
    /// classify: toxic / non-toxic.
    Toxic,
    /// generate: English to French.
    Translate,
}

impl ToyModel {
    pub fn name(self) -> &'static str {
        match self {
            ToyModel::Ocr => "ocr",
            ToyModel::Toxic => "toxic",
            ToyModel::Translate => "translate",
        }
    }

    pub fn task(self) -> Task {
        match self {
            ToyModel::Toxic => Task::Classify,
            ToyModel::Ocr | ToyModel::Translate => Task::Generate,
        }
    }
}

impl fmt::Display for ToyModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ToyModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ocr" => Ok(ToyModel::Ocr),
            "toxic" => Ok(ToyModel::Toxic),
            "translate" => Ok(ToyModel::Translate),
            other => Err(format!("unknown toy model `{other}` (expected ocr, toxic or translate)")),
        }
    }
}

/// Server side of the protocol for one toy model.
///
/// Image payloads are read with the template OCR before the model runs, so
/// every toy model doubles as a render → OCR → model pipeline. Text
/// payloads reach the model directly, except for the OCR model, which
/// renders them at `canvas_width` first.
#[derive(Clone, Debug)]
pub struct ToyServer {
    pub model: ToyModel,
    pub canvas_width: usize,
    pub lexicon: ToxicLexicon,
}

pub const DEFAULT_CANVAS_WIDTH: usize = 64;

impl ToyServer {
    pub fn new(model: ToyModel) -> Self {
        Self {
            model,
            canvas_width: DEFAULT_CANVAS_WIDTH,
            lexicon: ToxicLexicon::default(),
        }
    }

    pub fn with_canvas_width(mut self, width: usize) -> Self {
        self.canvas_width = width;
        self
    }

    fn input_text(&self, payload: &Payload) -> Result<String, String> {
        match payload {
            Payload::Text(t) if self.model == ToyModel::Ocr => {
                read_text(t, self.canvas_width).map_err(|e| e.to_string())
            }
            Payload::Text(t) => Ok(t.clone()),
            Payload::ImagePgmB64(b64) => {
                let bytes = base64::engine::general_purpose::STANDARD
                    .decode(b64)
                    .map_err(|e| format!("bad base64: {e}"))?;
                let canvas = Canvas::from_pgm(&bytes).map_err(|e| e.to_string())?;
                Ok(toy_ocr(&canvas))
            }
        }
    }

    pub fn handle(&self, req: &ModelRequest) -> ModelResponse {
        if req.task != self.model.task() {
            return ModelResponse::error(
                req.id,
                format!("toy model `{}` does not support this task", self.model),
            );
        }
        let text = match self.input_text(&req.payload) {
            Ok(t) => t,
            Err(e) => return ModelResponse::error(req.id, e),
        };
        match self.model {
            ToyModel::Ocr => ModelResponse::output(req.id, text),
            ToyModel::Translate => ModelResponse::output(req.id, toy_translate(&text)),
            ToyModel::Toxic => ModelResponse::probs(req.id, self.lexicon.probs(&text)),
        }
    }

    /// Handles one JSON line and returns the response line (no newline).
    pub fn handle_line(&self, line: &str) -> String {
        let response = match serde_json::from_str::<ModelRequest>(line) {
            Ok(req) => self.handle(&req),
            Err(e) => {
                let id = serde_json::from_str::<serde_json::Value>(line)
                    .ok()
                    .and_then(|v| v.get("id").and_then(serde_json::Value::as_u64))
                    .unwrap_or(0);
                ModelResponse::error(id, format!("bad request: {e}"))
            }
        };
        serde_json::to_string(&response).expect("responses always serialize")
    }
}
