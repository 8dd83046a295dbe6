//! Differential evolution over diacritic genomes.
//!
//! Each generation draws one differential weight `F ~ U(lo, hi)`, builds a
//! trial genome per member from partners `a, b, c` taken from the
//! generation-start population (`p_a + F·(p_b − p_c)` on both gene
//! components, binomial crossover with one forced position), evaluates all
//! trials, then keeps each trial only if it is strictly better than its
//! parent. Ties on the final argmin go to the lowest population index.

use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapter::{AdapterError, ModelAdapter};
use crate::metrics::Metric;
use crate::perturb::{perturb, DiacriticAlphabet, Gene, Genome};

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("population size must be at least 4, got {0}")]
    PopulationTooSmall(usize),
    #[error("crossover probability must lie in [0, 1], got {0}")]
    Crossover(f64),
    #[error("differential weight range must satisfy 0 <= lo <= hi <= 2, got [{0}, {1}]")]
    Weight(f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeParams {
    pub population_size: usize,
    pub iterations: usize,
    pub crossover_probability: f64,
    /// Per-generation dither range for the differential weight.
    pub differential_weight: (f64, f64),
    /// Maximum diacritics; the genome holds `budget + 1` genes.
    pub budget: usize,
    pub seed: u64,
}

impl Default for DeParams {
    fn default() -> Self {
        Self {
            population_size: 32,
            iterations: 10,
            crossover_probability: 0.7,
            differential_weight: (0.5, 1.0),
            budget: 5,
            seed: 0,
        }
    }
}

impl DeParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        if self.population_size < 4 {
            return Err(ParamError::PopulationTooSmall(self.population_size));
        }
        if !(0.0..=1.0).contains(&self.crossover_probability) {
            return Err(ParamError::Crossover(self.crossover_probability));
        }
        let (lo, hi) = self.differential_weight;
        if !(0.0 <= lo && lo <= hi && hi <= 2.0) {
            return Err(ParamError::Weight(lo, hi));
        }
        Ok(())
    }

    pub fn genome_len(&self) -> usize {
        self.budget + 1
    }
}

/// Search-space bounds for one input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GenomeSpace {
    pub genes: usize,
    pub alphabet_len: usize,
    pub text_len: usize,
    /// Pin every gene to "skip" (budget 0).
    pub skip_all: bool,
}

impl GenomeSpace {
    fn clamp(&self, g: &mut Genome) {
        g.clamp_in_place(self.alphabet_len, self.text_len);
        if self.skip_all {
            for gene in g.genes_mut() {
                gene.i = -1.0;
            }
        }
    }
}

/// Outcome of a genome-level search.
#[derive(Clone, Debug, PartialEq)]
pub struct GenomeSearch {
    pub best: Genome,
    pub best_fitness: f64,
    /// Best fitness after initialization (index 0) and after each generation.
    pub history: Vec<f64>,
    pub population: Vec<Genome>,
    pub fitness: Vec<f64>,
}

fn argmin(values: &[f64]) -> usize {
    let key = |v: f64| if v.is_nan() { f64::INFINITY } else { v };
    let mut best = 0;
    for (n, &v) in values.iter().enumerate() {
        if key(v) < key(values[best]) {
            best = n;
        }
    }
    best
}

/// Three distinct population indices, none equal to `j`.
fn partners(rng: &mut ChaCha8Rng, size: usize, j: usize) -> [usize; 3] {
    let picked = index::sample(rng, size - 1, 3);
    let shift = |k: usize| if k >= j { k + 1 } else { k };
    [shift(picked.index(0)), shift(picked.index(1)), shift(picked.index(2))]
}

/// Minimizes a batch fitness over genomes in `space`.
///
/// `evaluate` receives the whole initial population, then each generation's
/// trial genomes, and returns one fitness per genome in order.
pub fn minimize_genomes<E>(
    space: GenomeSpace,
    params: &DeParams,
    mut evaluate: impl FnMut(&[Genome]) -> Result<Vec<f64>, E>,
) -> Result<GenomeSearch, E> {
    params.validate().expect("DeParams must be validated before searching");
    let s = params.population_size;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let mut population: Vec<Genome> = (0..s)
        .map(|_| {
            let mut g: Genome = (0..space.genes)
                .map(|_| {
                    Gene::new(
                        rng.gen_range(0.0..space.alphabet_len as f64),
                        rng.gen_range(-1.0..=space.text_len as f64),
                    )
                })
                .collect();
            space.clamp(&mut g);
            g
        })
        .collect();
    let mut fitness = evaluate(&population)?;
    assert_eq!(fitness.len(), s, "evaluate must score every genome");
    let mut history = vec![fitness[argmin(&fitness)]];

    let (f_lo, f_hi) = params.differential_weight;
    for _ in 0..params.iterations {
        let weight = if f_hi > f_lo { rng.gen_range(f_lo..f_hi) } else { f_lo };
        let trials: Vec<Genome> = (0..s)
            .map(|j| {
                let [a, b, c] = partners(&mut rng, s, j);
                let forced = rng.gen_range(0..space.genes.max(1));
                let mut trial = population[j].clone();
                for k in 0..space.genes {
                    let r: f64 = rng.gen();
                    if r < params.crossover_probability || k == forced {
                        let (pa, pb, pc) = (
                            population[a].genes()[k],
                            population[b].genes()[k],
                            population[c].genes()[k],
                        );
                        trial.genes_mut()[k] =
                            Gene::new(pa.d + weight * (pb.d - pc.d), pa.i + weight * (pb.i - pc.i));
                    }
                }
                space.clamp(&mut trial);
                trial
            })
            .collect();
        let trial_fitness = evaluate(&trials)?;
        for (j, (trial, f)) in trials.into_iter().zip(trial_fitness).enumerate() {
            if f < fitness[j] {
                population[j] = trial;
                fitness[j] = f;
            }
        }
        history.push(fitness[argmin(&fitness)]);
    }

    let best = argmin(&fitness);
    Ok(GenomeSearch {
        best: population[best].clone(),
        best_fitness: fitness[best],
        history,
        population,
        fitness,
    })
}

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error("model returned no probability for class `{0}`")]
    UnknownClass(String),
    #[error("{0}")]
    Other(String),
}

/// Black-box fitness over perturbed text; lower is better.
pub trait FitnessObjective: Sync {
    fn evaluate(&self, text: &str) -> Result<f64, ObjectiveError>;

    /// Whether `evaluate` may be called from several threads at once.
    fn concurrent(&self) -> bool {
        true
    }
}

impl<F> FitnessObjective for F
where
    F: Fn(&str) -> Result<f64, ObjectiveError> + Sync,
{
    fn evaluate(&self, text: &str) -> Result<f64, ObjectiveError> {
        self(text)
    }
}

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("objective failed: {0}")]
    Objective(#[from] ObjectiveError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best_fitness: f64,
    /// Objective calls made so far.
    pub evaluations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizationTrace {
    pub generations: Vec<GenerationRecord>,
    pub evaluation_count: usize,
    pub best_genome: Genome,
    pub best_text: String,
    pub best_fitness: f64,
}

impl OptimizationTrace {
    /// One JSON object per generation.
    pub fn to_jsonl(&self) -> String {
        self.generations
            .iter()
            .map(|g| serde_json::to_string(g).expect("plain record") + "\n")
            .collect()
    }
}

/// Searches for a perturbation of `text` minimizing `objective`.
///
/// Fitness is cached per perturbed string, so duplicate genomes cost one
/// objective call. Uncached strings of one batch are evaluated in parallel
/// when the objective allows it; results are merged in population order.
pub fn optimize(
    text: &str,
    objective: &dyn FitnessObjective,
    params: &DeParams,
    alphabet: &DiacriticAlphabet,
) -> Result<(String, OptimizationTrace), OptimizeError> {
    params.validate()?;
    let space = GenomeSpace {
        genes: params.genome_len(),
        alphabet_len: alphabet.len(),
        text_len: text.chars().count(),
        skip_all: params.budget == 0,
    };
    let mut cache: HashMap<String, f64> = HashMap::new();
    let mut evaluations = 0usize;
    let mut per_generation = Vec::new();

    let search = minimize_genomes(space, params, |genomes| -> Result<Vec<f64>, ObjectiveError> {
        let texts: Vec<String> = genomes.iter().map(|g| perturb(text, g, alphabet)).collect();
        let mut fresh: Vec<&String> = Vec::new();
        for t in &texts {
            if !cache.contains_key(t) && !fresh.contains(&t) {
                fresh.push(t);
            }
        }
        let scored: Vec<Result<f64, ObjectiveError>> = if objective.concurrent() {
            fresh.par_iter().map(|t| objective.evaluate(t)).collect()
        } else {
            fresh.iter().map(|t| objective.evaluate(t)).collect()
        };
        evaluations += fresh.len();
        for (t, f) in fresh.into_iter().zip(scored) {
            cache.insert(t.clone(), f?);
        }
        let fitness: Vec<f64> = texts.iter().map(|t| cache[t]).collect();
        per_generation.push(evaluations);
        Ok(fitness)
    })?;

    let best_text = perturb(text, &search.best, alphabet);
    let generations = search
        .history
        .iter()
        .zip(&per_generation)
        .enumerate()
        .map(|(generation, (&best_fitness, &evaluations))| GenerationRecord {
            generation,
            best_fitness,
            evaluations,
        })
        .collect();
    let trace = OptimizationTrace {
        generations,
        evaluation_count: evaluations,
        best_genome: search.best,
        best_text: best_text.clone(),
        best_fitness: search.best_fitness,
    };
    Ok((best_text, trace))
}

/// Whether a classifier fitness uses the probability or its log-odds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassScore {
    #[default]
    Probability,
    Logit,
}

/// What the attack is trying to degrade.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AttackGoal {
    /// Minimize the score of `target_class`.
    Classify {
        target_class: String,
        #[serde(default)]
        score: ClassScore,
    },
    /// Minimize `metric(model(x̂), reference)` as a similarity.
    Generate { reference: String, metric: Metric },
}

/// A model plus a goal, usable as a fitness objective.
#[derive(Clone)]
pub struct ModelObjective {
    adapter: Arc<ModelAdapter>,
    goal: AttackGoal,
}

/// What the model said about one input, alongside its fitness.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub fitness: f64,
    /// Generated text, or the top-probability label for classifiers.
    pub output: String,
}

pub fn build_objective(goal: AttackGoal, adapter: Arc<ModelAdapter>) -> ModelObjective {
    ModelObjective { adapter, goal }
}

const LOGIT_EPS: f64 = 1e-12;

impl ModelObjective {
    pub fn goal(&self) -> &AttackGoal {
        &self.goal
    }

    pub fn observe(&self, text: &str) -> Result<Observation, ObjectiveError> {
        match &self.goal {
            AttackGoal::Classify { target_class, score } => {
                let probs = self.adapter.classify(text)?;
                let p = *probs
                    .get(target_class)
                    .ok_or_else(|| ObjectiveError::UnknownClass(target_class.clone()))?;
                let fitness = match score {
                    ClassScore::Probability => p,
                    ClassScore::Logit => {
                        let p = p.clamp(LOGIT_EPS, 1.0 - LOGIT_EPS);
                        (p / (1.0 - p)).ln()
                    }
                };
                let mut top: Option<(&String, f64)> = None;
                for (label, &v) in &probs {
                    if top.is_none_or(|(_, best)| v > best) {
                        top = Some((label, v));
                    }
                }
                Ok(Observation {
                    fitness,
                    output: top.map(|(l, _)| l.clone()).unwrap_or_default(),
                })
            }
            AttackGoal::Generate { reference, metric } => {
                let output = self.adapter.generate(text)?;
                let fitness = metric.score(&output, reference).similarity();
                Ok(Observation { fitness, output })
            }
        }
    }
}

impl FitnessObjective for ModelObjective {
    fn evaluate(&self, text: &str) -> Result<f64, ObjectiveError> {
        self.observe(text).map(|o| o.fitness)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::{InProcessTransport, InputMode};
    use crate::toy::{self, ToyModel, ToyServer};

    fn toy_adapter(model: ToyModel) -> Arc<ModelAdapter> {
        Arc::new(ModelAdapter::new(
            Arc::new(InProcessTransport::new(ToyServer::new(model))),
            InputMode::Text,
        ))
    }

    fn params(m: usize, budget: usize, seed: u64) -> DeParams {
        DeParams {
            iterations: m,
            budget,
            seed,
            ..DeParams::default()
        }
    }

    #[test]
    fn param_validation() {
        assert!(DeParams::default().validate().is_ok());
        let bad = DeParams { population_size: 3, ..DeParams::default() };
        assert_eq!(bad.validate(), Err(ParamError::PopulationTooSmall(3)));
        let bad = DeParams { crossover_probability: 1.5, ..DeParams::default() };
        assert!(matches!(bad.validate(), Err(ParamError::Crossover(_))));
        let bad = DeParams { differential_weight: (0.5, 2.5), ..DeParams::default() };
        assert!(matches!(bad.validate(), Err(ParamError::Weight(..))));
    }

    #[test]
    fn partners_are_distinct() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for size in 4..10 {
            for j in 0..size {
                for _ in 0..50 {
                    let [a, b, c] = partners(&mut rng, size, j);
                    let all = [a, b, c, j];
                    for x in 0..4 {
                        assert!(all[x] < size);
                        for y in x + 1..4 {
                            assert_ne!(all[x], all[y]);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn zero_iterations_returns_best_initial_member() {
        let alphabet = DiacriticAlphabet::default();
        let obj = |t: &str| -> Result<f64, ObjectiveError> { Ok(-(t.chars().count() as f64)) };
        let p = params(0, 3, 11);
        let (text, trace) = optimize("hello", &obj, &p, &alphabet).unwrap();
        assert_eq!(trace.generations.len(), 1);
        // Recreate the initial population independently of `optimize`.
        let space = GenomeSpace { genes: 4, alphabet_len: 73, text_len: 5, skip_all: false };
        let init = minimize_genomes(space, &p, |g| {
            Ok::<_, ()>(g.iter().map(|g| -(perturb("hello", g, &alphabet).chars().count() as f64)).collect())
        })
        .unwrap();
        assert_eq!(text, perturb("hello", &init.best, &alphabet));
    }

    #[test]
    fn constant_fitness_keeps_index_zero() {
        let space = GenomeSpace { genes: 2, alphabet_len: 73, text_len: 4, skip_all: false };
        let p = params(5, 1, 3);
        let r = minimize_genomes(space, &p, |g| Ok::<_, ()>(vec![1.0; g.len()])).unwrap();
        assert!(r.history.iter().all(|&h| h == 1.0));
        // Equal-fitness trials never replace, so the returned member is the
        // untouched initial member 0.
        let init = minimize_genomes(space, &params(0, 1, 3), |g| Ok::<_, ()>(vec![1.0; g.len()])).unwrap();
        assert_eq!(r.best, init.population[0]);
    }

    #[test]
    fn budget_zero_is_identity() {
        let alphabet = DiacriticAlphabet::default();
        let calls = std::sync::atomic::AtomicUsize::new(0);
        let obj = |_: &str| -> Result<f64, ObjectiveError> {
            calls.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
            Ok(0.0)
        };
        let (text, trace) = optimize("abc", &obj, &params(4, 0, 1), &alphabet).unwrap();
        assert_eq!(text, "abc");
        assert_eq!(trace.evaluation_count, 1);
        assert_eq!(calls.into_inner(), 1);
    }

    #[test]
    fn evaluation_budget_and_bounds() {
        let alphabet = DiacriticAlphabet::default();
        let obj = |t: &str| -> Result<f64, ObjectiveError> { Ok(t.len() as f64) };
        let p = params(6, 4, 9);
        let (_, trace) = optimize("some words", &obj, &p, &alphabet).unwrap();
        assert!(trace.evaluation_count <= p.population_size * (p.iterations + 1));
        assert_eq!(trace.generations.len(), p.iterations + 1);
        for w in trace.generations.windows(2) {
            assert!(w[1].best_fitness <= w[0].best_fitness);
            assert!(w[1].evaluations >= w[0].evaluations);
        }
        for g in trace.best_genome.genes() {
            assert!((0.0..73.0).contains(&g.d) && (-1.0..=10.0).contains(&g.i));
        }
        let lines = trace.to_jsonl();
        assert_eq!(lines.lines().count(), 7);
        assert!(lines.starts_with("{\"generation\":0,\"best_fitness\":"));
    }

    #[test]
    fn objective_errors_abort() {
        let alphabet = DiacriticAlphabet::default();
        let obj = |_: &str| -> Result<f64, ObjectiveError> { Err(ObjectiveError::Other("down".into())) };
        let r = optimize("abc", &obj, &params(2, 1, 0), &alphabet);
        assert!(matches!(r, Err(OptimizeError::Objective(ObjectiveError::Other(_)))));
    }

    #[test]
    fn serial_and_parallel_agree() {
        struct Serial;
        impl FitnessObjective for Serial {
            fn evaluate(&self, t: &str) -> Result<f64, ObjectiveError> {
                Ok(-(toy::read_text(t, 16).unwrap().len() as f64) + t.len() as f64 * 0.01)
            }
            fn concurrent(&self) -> bool {
                false
            }
        }
        let par = |t: &str| Serial.evaluate(t);
        let alphabet = DiacriticAlphabet::default();
        let p = params(3, 2, 5);
        let a = optimize("abc def", &Serial, &p, &alphabet).unwrap();
        let b = optimize("abc def", &par, &p, &alphabet).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn classify_objective_floor_is_logistic_bias() {
        let obj = build_objective(
            AttackGoal::Classify { target_class: toy::TOXIC.into(), score: ClassScore::Probability },
            toy_adapter(ToyModel::Toxic),
        );
        let f = obj.evaluate("have a nice day").unwrap();
        assert!((f - toy::logistic(toy::DEFAULT_BIAS)).abs() < 1e-12);
        let obs = obj.observe("you idiot").unwrap();
        assert_eq!(obs.output, toy::TOXIC);

        let logit = build_objective(
            AttackGoal::Classify { target_class: toy::TOXIC.into(), score: ClassScore::Logit },
            toy_adapter(ToyModel::Toxic),
        );
        assert!((logit.evaluate("nice").unwrap() - toy::DEFAULT_BIAS).abs() < 1e-9);

        let missing = build_objective(
            AttackGoal::Classify { target_class: "spam".into(), score: ClassScore::Probability },
            toy_adapter(ToyModel::Toxic),
        );
        assert!(matches!(missing.evaluate("x"), Err(ObjectiveError::UnknownClass(_))));
    }

    #[test]
    fn generate_objective_with_identity_model() {
        let obj = build_objective(
            AttackGoal::Generate { reference: "Hello there".into(), metric: Metric::Chrf },
            toy_adapter(ToyModel::Ocr),
        );
        assert!((obj.evaluate("Hello there").unwrap() - 100.0).abs() < 1e-12);
        let lev = build_objective(
            AttackGoal::Generate { reference: "Hello".into(), metric: Metric::NegLevenshtein },
            toy_adapter(ToyModel::Ocr),
        );
        assert_eq!(lev.evaluate("Hello").unwrap(), 0.0);
        assert!(lev.evaluate("Hullo").unwrap() < 0.0);
    }

    #[test]
    fn goal_config_shape() {
        let g: AttackGoal =
            serde_json::from_str(r#"{"kind":"generate","reference":"x","metric":"neg-levenshtein"}"#).unwrap();
        assert_eq!(g, AttackGoal::Generate { reference: "x".into(), metric: Metric::NegLevenshtein });
        assert!(serde_json::from_str::<AttackGoal>(r#"{"kind":"generate","reference":"x","metric":"bleu"}"#).is_err());
    }
}
