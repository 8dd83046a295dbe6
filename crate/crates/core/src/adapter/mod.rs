//! Black-box model access: the wire protocol, transports, and the client
//! that renders text locally when the target consumes images.

mod protocol;
mod transport;

pub use protocol::{ModelRequest, ModelResponse, Payload, Task, PROB_SUM_TOLERANCE};
pub use transport::{
    timeout_from_env, HttpTransport, InProcessTransport, SubprocessTransport, Transport,
    DEFAULT_TIMEOUT, DEFAULT_WINDOW, TIMEOUT_ENV,
};

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::render::{self, ChunkPlan, RenderError};

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("request {id} timed out after {} ms", .after.as_millis())]
    Timeout { id: u64, after: Duration },
    #[error("protocol error: {message} (raw: {raw:?})")]
    Protocol { message: String, raw: String },
    #[error("model process exited")]
    ProcessExited,
    #[error("failed to start model process: {0}")]
    Spawn(#[source] std::io::Error),
    #[error("transport I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("http: {0}")]
    Http(String),
    #[error("model reported: {0}")]
    Model(String),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("text needs {needed} canvases but at most {max} are allowed")]
    TooManyCanvases { needed: usize, max: usize },
}

/// What the client sends for a piece of text.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum InputMode {
    Text,
    /// Render locally onto `canvas_width`-cell canvases and send PGM images.
    Image {
        canvas_width: usize,
        max_canvases: usize,
    },
}

/// Chunks and renders `text`, returning the plan and one base64 PGM per chunk.
pub fn render_locally(
    text: &str,
    canvas_width: usize,
    max_canvases: usize,
) -> Result<(ChunkPlan, Vec<String>), AdapterError> {
    let plan = render::chunk(text, canvas_width);
    if plan.chunks.len() > max_canvases {
        return Err(AdapterError::TooManyCanvases {
            needed: plan.chunks.len(),
            max: max_canvases,
        });
    }
    let images = plan
        .chunks
        .iter()
        .map(|c| {
            let canvas = render::render(c, canvas_width)?;
            Ok(base64::engine::general_purpose::STANDARD.encode(canvas.to_pgm()))
        })
        .collect::<Result<Vec<_>, AdapterError>>()?;
    Ok((plan, images))
}

/// Client handle to one model. Cheap to share across threads.
pub struct ModelAdapter {
    transport: Arc<dyn Transport>,
    mode: InputMode,
    next_id: AtomicU64,
}

impl ModelAdapter {
    pub fn new(transport: Arc<dyn Transport>, mode: InputMode) -> Self {
        Self {
            transport,
            mode,
            next_id: AtomicU64::new(1),
        }
    }

    pub fn mode(&self) -> InputMode {
        self.mode
    }

    /// Sends one request and checks the response against it.
    pub fn query(&self, task: Task, payload: Payload, rendered: bool) -> Result<ModelResponse, AdapterError> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let req = ModelRequest {
            id,
            task,
            payload,
            render: rendered,
        };
        let resp = self.transport.call(req)?;
        if resp.id != id {
            return Err(AdapterError::Protocol {
                message: format!("response id {} for request {id}", resp.id),
                raw: serde_json::to_string(&resp).unwrap_or_default(),
            });
        }
        if let Some(e) = &resp.error {
            return Err(AdapterError::Model(e.clone()));
        }
        if !resp.probs_normalized() {
            return Err(AdapterError::Protocol {
                message: "class probabilities do not sum to 1".into(),
                raw: serde_json::to_string(&resp).unwrap_or_default(),
            });
        }
        Ok(resp)
    }

    fn payloads(&self, text: &str, max_override: Option<usize>) -> Result<(Option<ChunkPlan>, Vec<Payload>), AdapterError> {
        match self.mode {
            InputMode::Text => Ok((None, vec![Payload::Text(text.to_owned())])),
            InputMode::Image {
                canvas_width,
                max_canvases,
            } => {
                let (plan, images) =
                    render_locally(text, canvas_width, max_override.unwrap_or(max_canvases).min(max_canvases))?;
                Ok((Some(plan), images.into_iter().map(Payload::ImagePgmB64).collect()))
            }
        }
    }

    /// Class probabilities. In image mode the text must fit one canvas.
    pub fn classify(&self, text: &str) -> Result<BTreeMap<String, f64>, AdapterError> {
        let (_, payloads) = self.payloads(text, Some(1))?;
        let rendered = matches!(self.mode, InputMode::Image { .. });
        // a blank input renders to zero canvases; send an empty one
        let payload = match payloads.into_iter().next() {
            Some(p) => p,
            None => self.blank_payload()?,
        };
        let resp = self.query(Task::Classify, payload, rendered)?;
        resp.probs.ok_or_else(|| AdapterError::Protocol {
            message: "classify response without probs".into(),
            raw: String::new(),
        })
    }

    fn blank_payload(&self) -> Result<Payload, AdapterError> {
        match self.mode {
            InputMode::Text => Ok(Payload::Text(String::new())),
            InputMode::Image { canvas_width, .. } => {
                let canvas = render::render("", canvas_width)?;
                Ok(Payload::ImagePgmB64(
                    base64::engine::general_purpose::STANDARD.encode(canvas.to_pgm()),
                ))
            }
        }
    }

    /// Generated text. In image mode each canvas is a separate request and
    /// the outputs are reassembled along the chunk plan.
    pub fn generate(&self, text: &str) -> Result<String, AdapterError> {
        let (plan, payloads) = self.payloads(text, None)?;
        let rendered = plan.is_some();
        let outputs = payloads
            .into_iter()
            .map(|p| {
                let resp = self.query(Task::Generate, p, rendered)?;
                resp.output.ok_or_else(|| AdapterError::Protocol {
                    message: "generate response without output".into(),
                    raw: String::new(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        match plan {
            Some(plan) => Ok(render::reassemble(&outputs, &plan).expect("one output per chunk")),
            None => Ok(outputs.into_iter().next().unwrap_or_default()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::Canvas;
    use crate::toy::{ToyModel, ToyServer};

    fn adapter(model: ToyModel, mode: InputMode) -> ModelAdapter {
        ModelAdapter::new(Arc::new(InProcessTransport::new(ToyServer::new(model))), mode)
    }

    const IMAGE: InputMode = InputMode::Image {
        canvas_width: 12,
        max_canvases: 8,
    };

    #[test]
    fn classify_toxic_probs() {
        for mode in [InputMode::Text, IMAGE] {
            let probs = adapter(ToyModel::Toxic, mode).classify("you idiot").unwrap();
            assert_eq!(probs.keys().collect::<Vec<_>>(), ["non-toxic", "toxic"]);
            assert!((probs.values().sum::<f64>() - 1.0).abs() < 1e-6);
            assert!(probs["toxic"] > 0.5);
        }
    }

    #[test]
    fn generate_translate() {
        let a = adapter(ToyModel::Translate, InputMode::Text);
        assert_eq!(a.generate("hello world").unwrap(), "bonjour monde");
    }

    #[test]
    fn image_mode_single_and_multi_chunk() {
        let (plan, images) = render_locally("hello", 12, 4).unwrap();
        assert_eq!((plan.chunks.len(), images.len()), (1, 1));
        let (plan, images) = render_locally("hello world again", 12, 4).unwrap();
        assert_eq!(plan.chunks.len(), 2);
        assert_eq!(images.len(), 2);
        let a = adapter(ToyModel::Translate, IMAGE);
        assert_eq!(a.generate("hello world again").unwrap(), "bonjour monde again");
        assert!(matches!(
            render_locally("hello world again", 12, 1),
            Err(AdapterError::TooManyCanvases { needed: 2, max: 1 })
        ));
    }

    #[test]
    fn image_bytes_decode_to_canvas() {
        let (_, images) = render_locally("Hi\u{336}!", 8, 1).unwrap();
        let bytes = base64::engine::general_purpose::STANDARD.decode(&images[0]).unwrap();
        let decoded = Canvas::from_pgm(&bytes).unwrap();
        assert_eq!(decoded.cells(), render::render("Hi\u{336}!", 8).unwrap().cells());
    }

    #[test]
    fn model_errors_surface() {
        let a = adapter(ToyModel::Translate, InputMode::Text);
        assert!(matches!(a.classify("x"), Err(AdapterError::Model(_))));
    }

    #[test]
    fn blank_text_still_queries() {
        let a = adapter(ToyModel::Toxic, IMAGE);
        let probs = a.classify("").unwrap();
        assert!(probs["toxic"] < 0.5);
        assert_eq!(adapter(ToyModel::Ocr, IMAGE).generate("   ").unwrap(), "   ");
    }
}
