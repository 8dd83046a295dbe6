//! Attack campaigns: every dataset input at every budget, persisted as JSON
//! lines plus per-budget aggregates.
//!
//! Output directory layout:
//!
//! - `records.jsonl`: one [`AttackRecord`] per (input, budget), sorted by id then budget
//! - `aggregates.csv`: per-budget summary, recomputable from the records
//! - `traces.jsonl`: per-generation best fitness for every attack
//! - `timing.jsonl`: wall-clock milliseconds per attack (the only file that
//!   differs between identical runs)

mod dataset;
mod report;

pub use dataset::{load_dataset, parse_dataset, DatasetError, Example};
pub use report::{aggregate, aggregates_csv, normalized_report, report, BudgetAggregate, ReportError, ReportRow};

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::adapter::{
    timeout_from_env, AdapterError, HttpTransport, InProcessTransport, InputMode, ModelAdapter,
    SubprocessTransport, Transport, DEFAULT_TIMEOUT, DEFAULT_WINDOW,
};
use crate::metrics::Metric;
use crate::optimizer::{build_objective, optimize, AttackGoal, ClassScore, DeParams, ParamError};
use crate::perturb::{count_marks, escape_unicode, DiacriticAlphabet};
use crate::toy::{ToyModel, ToyServer, DEFAULT_CANVAS_WIDTH};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const AGGREGATES_FILE: &str = "aggregates.csv";
pub const TRACES_FILE: &str = "traces.jsonl";
pub const TIMING_FILE: &str = "timing.jsonl";
pub const REPORT_FILE: &str = "report.csv";

/// Inputs per budget when the config does not say.
pub const DEFAULT_MAX_INPUTS: usize = 50;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceSource {
    /// The unperturbed input itself.
    #[default]
    Input,
    /// The example's `reference` field.
    Reference,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TaskSpec {
    Classify {
        /// Class whose score is minimized; the example's label when absent.
        #[serde(default)]
        target_class: Option<String>,
        #[serde(default)]
        score: ClassScore,
    },
    Generate {
        #[serde(default)]
        reference: ReferenceSource,
        metric: Metric,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum TransportSpec {
    /// A toy model in this process.
    Toy { model: ToyModel },
    /// A child process speaking JSON lines.
    Command { argv: Vec<String> },
    Http { url: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdapterSpec {
    pub transport: TransportSpec,
    #[serde(default = "text_mode")]
    pub input: InputMode,
    #[serde(default)]
    pub timeout_ms: Option<u64>,
    #[serde(default = "default_window")]
    pub window: usize,
}

fn text_mode() -> InputMode {
    InputMode::Text
}

fn default_window() -> usize {
    DEFAULT_WINDOW
}

impl AdapterSpec {
    pub fn timeout(&self) -> Duration {
        timeout_from_env(self.timeout_ms.map_or(DEFAULT_TIMEOUT, Duration::from_millis))
    }

    pub fn connect(&self) -> Result<Arc<ModelAdapter>, AdapterError> {
        let transport: Arc<dyn Transport> = match &self.transport {
            TransportSpec::Toy { model } => {
                let width = match self.input {
                    InputMode::Image { canvas_width, .. } => canvas_width,
                    InputMode::Text => DEFAULT_CANVAS_WIDTH,
                };
                Arc::new(InProcessTransport::new(ToyServer::new(*model).with_canvas_width(width)))
            }
            TransportSpec::Command { argv } => {
                Arc::new(SubprocessTransport::spawn(argv.clone(), self.timeout(), self.window)?)
            }
            TransportSpec::Http { url } => Arc::new(HttpTransport::new(url.clone(), self.timeout())),
        };
        Ok(Arc::new(ModelAdapter::new(transport, self.input)))
    }
}

/// Optimizer settings shared by every attack; budget and seed vary per job.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerSettings {
    pub population_size: usize,
    pub iterations: usize,
    pub crossover_probability: f64,
    pub differential_weight: (f64, f64),
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        let d = DeParams::default();
        Self {
            population_size: d.population_size,
            iterations: d.iterations,
            crossover_probability: d.crossover_probability,
            differential_weight: d.differential_weight,
        }
    }
}

impl OptimizerSettings {
    pub fn params(&self, budget: usize, seed: u64) -> DeParams {
        DeParams {
            population_size: self.population_size,
            iterations: self.iterations,
            crossover_probability: self.crossover_probability,
            differential_weight: self.differential_weight,
            budget,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub dataset: PathBuf,
    pub task: TaskSpec,
    #[serde(default = "default_budgets")]
    pub budgets: Vec<usize>,
    #[serde(default)]
    pub optimizer: OptimizerSettings,
    pub adapter: AdapterSpec,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Attack only the first `max_inputs` examples.
    #[serde(default = "default_max_inputs")]
    pub max_inputs: Option<usize>,
    #[serde(default = "yes")]
    pub escape_unicode: bool,
    #[serde(default)]
    pub alphabet: Option<DiacriticAlphabet>,
    /// Parallel attack workers; rayon's default when absent.
    #[serde(default)]
    pub workers: Option<usize>,
}

fn default_budgets() -> Vec<usize> {
    (0..=5).collect()
}

fn default_max_inputs() -> Option<usize> {
    Some(DEFAULT_MAX_INPUTS)
}

fn yes() -> bool {
    true
}

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("adapter: {0}")]
    Adapter(#[from] AdapterError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CampaignError + '_ {
    move |source| CampaignError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl CampaignConfig {
    pub fn from_json(text: &str) -> Result<Self, CampaignError> {
        serde_json::from_str(text).map_err(|e| CampaignError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CampaignError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg = Self::from_json(&text)?;
        // relative paths resolve against the config file's directory
        if let Some(dir) = path.parent() {
            if cfg.dataset.is_relative() {
                cfg.dataset = dir.join(&cfg.dataset);
            }
            if cfg.output_dir.is_relative() {
                cfg.output_dir = dir.join(&cfg.output_dir);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CampaignError> {
        if self.budgets.is_empty() {
            return Err(CampaignError::Config("at least one budget is required".into()));
        }
        if self.budgets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CampaignError::Config(format!(
                "budgets must be strictly ascending, got {:?}",
                self.budgets
            )));
        }
        self.optimizer.params(0, 0).validate()?;
        if let InputMode::Image { canvas_width, max_canvases } = self.adapter.input {
            if canvas_width < 2 || max_canvases == 0 {
                return Err(CampaignError::Config(
                    "image mode needs canvas_width >= 2 and max_canvases >= 1".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Per-attack seed: the campaign seed XOR a stable hash of (id, budget).
pub fn attack_seed(seed: u64, id: &str, budget: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(id.as_bytes());
    h.update([0u8]);
    h.update((budget as u64).to_le_bytes());
    let digest = h.finalize();
    seed ^ u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordStatus {
    Ok,
    Failed,
}

/// Outcome of attacking one input at one budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackRecord {
    pub id: String,
    pub budget: usize,
    pub status: RecordStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub original: String,
    pub perturbed: String,
    pub realized_marks: usize,
    pub genome_len: usize,
    pub fitness_before: Option<f64>,
    pub fitness_after: Option<f64>,
    pub output_before: Option<String>,
    pub output_after: Option<String>,
    /// Metric name for generate tasks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<Metric>,
    pub metric_before: Option<f64>,
    pub metric_after: Option<f64>,
    /// Gold label for classify tasks, when the dataset has one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub correct_before: Option<bool>,
    pub correct_after: Option<bool>,
    pub generations: usize,
    pub evaluations: usize,
}

impl AttackRecord {
    pub fn success(&self) -> bool {
        matches!((self.fitness_before, self.fitness_after), (Some(b), Some(a)) if a < b)
    }
}

#[derive(Serialize)]
struct TraceLine<'a> {
    id: &'a str,
    budget: usize,
    generation: usize,
    best_fitness: f64,
    evaluations: usize,
}

#[derive(Serialize)]
struct TimingLine<'a> {
    id: &'a str,
    budget: usize,
    wall_ms: u128,
}

struct JobResult {
    record: AttackRecord,
    trace: Vec<crate::optimizer::GenerationRecord>,
    wall: Duration,
}

#[derive(Debug)]
pub struct CampaignSummary {
    pub records: Vec<AttackRecord>,
    pub aggregates: Vec<BudgetAggregate>,
    pub failed: usize,
    pub output_dir: PathBuf,
}

fn resolve_goal(task: &TaskSpec, ex: &Example) -> Result<AttackGoal, DatasetError> {
    match task {
        TaskSpec::Classify { target_class, score } => {
            let target = target_class
                .clone()
                .or_else(|| ex.label.clone())
                .ok_or_else(|| DatasetError::at(ex.line, "classify task without target_class needs a `label`"))?;
            Ok(AttackGoal::Classify {
                target_class: target,
                score: *score,
            })
        }
        TaskSpec::Generate { reference, metric } => {
            let reference = match reference {
                ReferenceSource::Input => ex.input.clone(),
                ReferenceSource::Reference => ex
                    .reference
                    .clone()
                    .ok_or_else(|| DatasetError::at(ex.line, "generate task needs a `reference`"))?,
            };
            Ok(AttackGoal::Generate {
                reference,
                metric: *metric,
            })
        }
    }
}

fn attack_one(
    cfg: &CampaignConfig,
    adapter: &Arc<ModelAdapter>,
    alphabet: &DiacriticAlphabet,
    ex: &Example,
    goal: AttackGoal,
    budget: usize,
) -> JobResult {
    let start = Instant::now();
    let esc = |s: &str| if cfg.escape_unicode { escape_unicode(s) } else { s.to_owned() };
    let params = cfg.optimizer.params(budget, attack_seed(cfg.seed, &ex.id, budget));
    let objective = build_objective(goal.clone(), Arc::clone(adapter));
    let mut record = AttackRecord {
        id: ex.id.clone(),
        budget,
        status: RecordStatus::Ok,
        error: None,
        original: esc(&ex.input),
        perturbed: esc(&ex.input),
        realized_marks: 0,
        genome_len: params.genome_len(),
        fitness_before: None,
        fitness_after: None,
        output_before: None,
        output_after: None,
        metric: None,
        metric_before: None,
        metric_after: None,
        label: None,
        correct_before: None,
        correct_after: None,
        generations: 0,
        evaluations: 0,
    };
    let mut trace = Vec::new();

    let outcome = (|| -> Result<(), String> {
        let before = objective.observe(&ex.input).map_err(|e| e.to_string())?;
        let (mut perturbed, t) = optimize(&ex.input, &objective, &params, alphabet).map_err(|e| e.to_string())?;
        let mut after = objective.observe(&perturbed).map_err(|e| e.to_string())?;
        // Skipping every gene is always available, so the attack never ends
        // worse than the clean input.
        if after.fitness > before.fitness {
            perturbed = ex.input.clone();
            after = before.clone();
        }
        record.realized_marks = count_marks(&perturbed, alphabet) - count_marks(&ex.input, alphabet);
        record.perturbed = esc(&perturbed);
        record.fitness_before = Some(before.fitness);
        record.fitness_after = Some(after.fitness);
        record.output_before = Some(esc(&before.output));
        record.output_after = Some(esc(&after.output));
        record.generations = t.generations.len().saturating_sub(1);
        record.evaluations = t.evaluation_count;
        match &goal {
            AttackGoal::Generate { reference, metric } => {
                record.metric = Some(*metric);
                record.metric_before = Some(metric.score(&before.output, reference).value);
                record.metric_after = Some(metric.score(&after.output, reference).value);
            }
            AttackGoal::Classify { .. } => {
                if let Some(label) = &ex.label {
                    record.label = Some(label.clone());
                    record.correct_before = Some(&before.output == label);
                    record.correct_after = Some(&after.output == label);
                }
            }
        }
        trace = t.generations;
        Ok(())
    })();
    if let Err(e) = outcome {
        log::warn!("attack on {} at budget {budget} failed: {e}", ex.id);
        record.status = RecordStatus::Failed;
        record.error = Some(e);
    }
    JobResult {
        record,
        trace,
        wall: start.elapsed(),
    }
}

/// Attacks every input at every budget and writes the result files.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignSummary, CampaignError> {
    cfg.validate()?;
    let mut examples = load_dataset(&cfg.dataset)?;
    if let Some(n) = cfg.max_inputs {
        examples.truncate(n);
    }
    let goals = examples
        .iter()
        .map(|ex| resolve_goal(&cfg.task, ex))
        .collect::<Result<Vec<_>, _>>()?;
    let adapter = cfg.adapter.connect()?;
    let alphabet = cfg.alphabet.clone().unwrap_or_default();

    let jobs: Vec<(usize, usize)> = (0..examples.len())
        .flat_map(|n| cfg.budgets.iter().map(move |&b| (n, b)))
        .collect();
    let run = || -> Vec<JobResult> {
        jobs.par_iter()
            .map(|&(n, b)| attack_one(cfg, &adapter, &alphabet, &examples[n], goals[n].clone(), b))
            .collect()
    };
    let mut results = match cfg.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| CampaignError::Config(e.to_string()))?
            .install(run),
        None => run(),
    };
    results.sort_by(|a, b| (&a.record.id, a.record.budget).cmp(&(&b.record.id, b.record.budget)));

    std::fs::create_dir_all(&cfg.output_dir).map_err(io_err(&cfg.output_dir))?;
    let mut records_out = String::new();
    let mut traces_out = String::new();
    let mut timing_out = String::new();
    for r in &results {
        records_out.push_str(&serde_json::to_string(&r.record).expect("record serializes"));
        records_out.push('\n');
        for g in &r.trace {
            let line = TraceLine {
                id: &r.record.id,
                budget: r.record.budget,
                generation: g.generation,
                best_fitness: g.best_fitness,
                evaluations: g.evaluations,
            };
            traces_out.push_str(&serde_json::to_string(&line).expect("trace serializes"));
            traces_out.push('\n');
        }
        let t = TimingLine {
            id: &r.record.id,
            budget: r.record.budget,
            wall_ms: r.wall.as_millis(),
        };
        timing_out.push_str(&serde_json::to_string(&t).expect("timing serializes"));
        timing_out.push('\n');
    }
    let records: Vec<AttackRecord> = results.into_iter().map(|r| r.record).collect();
    let aggregates = aggregate(&records);
    let write = |name: &str, body: &str| -> Result<(), CampaignError> {
        let path = cfg.output_dir.join(name);
        std::fs::write(&path, body).map_err(io_err(&path))
    };
    write(RECORDS_FILE, &records_out)?;
    write(TRACES_FILE, &traces_out)?;
    write(TIMING_FILE, &timing_out)?;
    write(AGGREGATES_FILE, &aggregates_csv(&aggregates))?;

    let failed = records.iter().filter(|r| r.status == RecordStatus::Failed).count();
    Ok(CampaignSummary {
        records,
        aggregates,
        failed,
        output_dir: cfg.output_dir.clone(),
    })
}

/// Reads `records.jsonl` from a campaign directory.
pub fn read_records(dir: &Path) -> Result<Vec<AttackRecord>, CampaignError> {
    let path = dir.join(RECORDS_FILE);
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| CampaignError::Dataset(DatasetError::at(n + 1, e.to_string())))
        })
        .collect()
}
