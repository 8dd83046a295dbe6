//! Diacritic-injection attacks on visual text pipelines.
//!
//! Text is perturbed by inserting Unicode combining marks at positions chosen
//! by differential evolution against a black-box model. A bundled bitmap
//! renderer with template OCR lets an attack run end to end without any
//! external service, and `sanitize` strips the marks back out.
//!
//! ```
//! use diacritic_core::{perturb, sanitize, DiacriticAlphabet, Gene, Genome, SanitizePolicy};
//!
//! let alphabet = DiacriticAlphabet::default();
//! let genome = Genome::new(vec![Gene::new(53.0, 4.0)]); // U+0335 before index 4
//! let adv = perturb("idiot", &genome, &alphabet);
//! assert_eq!(adv, "idio\u{335}t");
//! assert_eq!(sanitize(&adv, &SanitizePolicy::default()), "idiot");
//! ```

pub mod adapter;
pub mod campaign;
pub mod corpus;
pub mod metrics;
pub mod optimizer;
pub mod perturb;
pub mod render;
pub mod sanitize;
pub mod toy;

pub use adapter::{AdapterError, InputMode, ModelAdapter, ModelRequest, ModelResponse, Payload, Task, Transport};
pub use campaign::{run_campaign, AttackRecord, CampaignConfig, CampaignError};
pub use metrics::{accuracy, chrf, levenshtein, token_f1, Metric, MetricValue};
pub use optimizer::{optimize, AttackGoal, DeParams, FitnessObjective, OptimizationTrace};
pub use perturb::{count_marks, escape_unicode, perturb, DiacriticAlphabet, Gene, Genome};
pub use render::{chunk, reassemble, render, Canvas, ChunkPlan};
pub use sanitize::{detect, sanitize, SanitizeMode, SanitizePolicy};
pub use toy::{toy_ocr, ToyModel, ToyServer};
