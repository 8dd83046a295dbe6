//! JSON-lines wire format shared by every transport.
//!
//! Requests carry exactly one of `text` or `image_pgm_b64`:
//!
//! ```text
//! {"id":1,"task":"generate","text":"hello world","render":false}
//! {"id":2,"task":"classify","image_pgm_b64":"UDUK...","render":true}
//! ```
//!
//! Responses echo the id and carry `output`, `probs`, or `error`:
//!
//! ```text
//! {"id":1,"output":"bonjour monde"}
//! {"id":2,"probs":{"non-toxic":0.95,"toxic":0.05}}
//! {"id":3,"error":"unsupported task"}
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Tolerance on the sum of returned class probabilities.
pub const PROB_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classify,
    Generate,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Payload {
    Text(String),
    /// Base64 of a binary PGM canvas.
    ImagePgmB64(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawRequest", into = "RawRequest")]
pub struct ModelRequest {
    pub id: u64,
    pub task: Task,
    pub payload: Payload,
    /// Set when the client rendered the text itself before sending.
    pub render: bool,
}

#[derive(Serialize, Deserialize)]
struct RawRequest {
    id: u64,
    task: Task,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image_pgm_b64: Option<String>,
    #[serde(default)]
    render: bool,
}

impl TryFrom<RawRequest> for ModelRequest {
    type Error = String;

    fn try_from(raw: RawRequest) -> Result<Self, Self::Error> {
        let payload = match (raw.text, raw.image_pgm_b64) {
            (Some(t), None) => Payload::Text(t),
            (None, Some(i)) => Payload::ImagePgmB64(i),
            _ => return Err("request must carry exactly one of `text` or `image_pgm_b64`".into()),
        };
        Ok(Self {
            id: raw.id,
            task: raw.task,
            payload,
            render: raw.render,
        })
    }
}

impl From<ModelRequest> for RawRequest {
    fn from(r: ModelRequest) -> Self {
        let (text, image_pgm_b64) = match r.payload {
            Payload::Text(t) => (Some(t), None),
            Payload::ImagePgmB64(i) => (None, Some(i)),
        };
        Self {
            id: r.id,
            task: r.task,
            text,
            image_pgm_b64,
            render: r.render,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ModelResponse {
    pub fn output(id: u64, output: impl Into<String>) -> Self {
        Self {
            id,
            output: Some(output.into()),
            probs: None,
            error: None,
        }
    }

    pub fn probs(id: u64, probs: BTreeMap<String, f64>) -> Self {
        Self {
            id,
            output: None,
            probs: Some(probs),
            error: None,
        }
    }

    pub fn error(id: u64, message: impl Into<String>) -> Self {
        Self {
            id,
            output: None,
            probs: None,
            error: Some(message.into()),
        }
    }

    /// True when `probs` is absent or sums to 1 within tolerance.
    pub fn probs_normalized(&self) -> bool {
        self.probs.as_ref().is_none_or(|p| {
            (p.values().sum::<f64>() - 1.0).abs() <= PROB_SUM_TOLERANCE
        })
    }
}
