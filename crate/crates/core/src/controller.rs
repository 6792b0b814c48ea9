//! The closed control loop.
//!
//! Every `F` generations the controller takes a population snapshot,
//! computes landscape features, asks the reasoning chain for new
//! hyperparameters, applies them to the engine and records the decision in
//! the experience pool. The outcome of a decision (best-fitness improvement)
//! is filled in at the next decision point, or at the end of the run.

use std::fmt;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ela::{self, ElaError, ElaFeatures, Hamming, HistoryWindow, DEFAULT_QUANTILE, DEFAULT_WINDOW};
use crate::experience::{ExperiencePool, ExperienceRecord, PoolError, DEFAULT_EXAMPLES};
use crate::metaheuristics::{Algorithm, Engine, EngineError, EngineState, HyperParams};
use crate::problems::{opt_gap, ProblemInstance};
use crate::reasoning::{self, Backend, ControlMap, Directive};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Full,
    NoEla,
    NoCor,
    NoElaNoCor,
    #[serde(rename = "static")]
    StaticBaseline,
}

impl Mode {
    pub const ABLATION: [Mode; 4] = [Mode::Full, Mode::NoEla, Mode::NoCor, Mode::NoElaNoCor];

    pub fn label(self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::NoEla => "no-ela",
            Mode::NoCor => "no-cor",
            Mode::NoElaNoCor => "no-ela-no-cor",
            Mode::StaticBaseline => "static",
        }
    }

    /// Whether the agents see landscape features.
    pub fn shows_features(self) -> bool {
        matches!(self, Mode::Full | Mode::NoCor)
    }

    /// Whether the three roles run as separate calls.
    pub fn chained(self) -> bool {
        matches!(self, Mode::Full | Mode::NoEla)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "full" => Ok(Mode::Full),
            "no-ela" | "noela" => Ok(Mode::NoEla),
            "no-cor" | "nocor" => Ok(Mode::NoCor),
            "no-ela-no-cor" | "noelanocor" => Ok(Mode::NoElaNoCor),
            "static" | "static-baseline" | "staticbaseline" => Ok(Mode::StaticBaseline),
            other => Err(format!("unknown mode {other:?} (expected full, no-ela, no-cor, no-ela-no-cor, static)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("engine failed at generation {generation}: {source}")]
    Engine { generation: u64, source: EngineError },
    #[error("landscape features failed at generation {generation}: {source}")]
    Ela { generation: u64, source: ElaError },
    #[error("experience pool: {0}")]
    Pool(#[from] PoolError),
    #[error("writing run output: {0}")]
    Io(#[from] std::io::Error),
    #[error("all {0} runs failed")]
    AllFailed(usize),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub instance: Arc<ProblemInstance>,
    pub algorithm: Algorithm,
    pub initial_params: HyperParams,
    pub seed: u64,
    /// Decision interval `F` in generations.
    pub decision_interval: usize,
    pub mode: Mode,
    pub backend: Backend,
    pub ela_quantile: f64,
    /// History window `m` for variability.
    pub window: usize,
    /// In-context examples per agent call.
    pub examples_k: usize,
    /// Where run files go; nothing is written when `None`.
    pub output_dir: Option<PathBuf>,
    /// Run files are named `{label}-s{seed}.*`.
    pub label: String,
}

impl RunConfig {
    pub fn new(instance: Arc<ProblemInstance>, algorithm: Algorithm) -> Self {
        let label = format!("{}-{}", instance.name(), algorithm);
        Self {
            instance,
            algorithm,
            initial_params: HyperParams::defaults(algorithm.family()),
            seed: 0,
            decision_interval: 1,
            mode: Mode::Full,
            backend: Backend::Rule,
            ela_quantile: DEFAULT_QUANTILE,
            window: DEFAULT_WINDOW,
            examples_k: DEFAULT_EXAMPLES,
            output_dir: None,
            label,
        }
    }

    pub fn run_id(&self) -> String {
        format!("{}-s{}", self.label, self.seed)
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if self.decision_interval == 0 {
            return Err(RunError::Config("decision interval must be positive".into()));
        }
        if self.window == 0 {
            return Err(RunError::Config("history window must be positive".into()));
        }
        if !(self.ela_quantile > 0.0 && self.ela_quantile <= 0.5) {
            return Err(RunError::Config(format!("quantile {} outside (0, 0.5]", self.ela_quantile)));
        }
        if self.mode != Mode::StaticBaseline && self.initial_params.population_size < 4 {
            return Err(RunError::Config("landscape features need a population of at least 4".into()));
        }
        if self.initial_params.family() != self.algorithm.family() {
            return Err(RunError::Config(format!(
                "{} needs {} parameters",
                self.algorithm,
                self.algorithm.family().label()
            )));
        }
        if !self.initial_params.within_bounds() {
            return Err(RunError::Config("initial parameters out of bounds".into()));
        }
        Ok(())
    }
}

/// Parameters in force from `generation + 1` on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliedParams {
    pub generation: u64,
    pub params: HyperParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run_id: String,
    pub instance: String,
    pub algorithm: Algorithm,
    pub mode: Mode,
    pub backend: String,
    pub decision_interval: usize,
    pub seed: u64,
    pub best_fitness: f64,
    pub best_code: Vec<usize>,
    pub best_known: Option<f64>,
    pub opt_gap_pct: Option<f64>,
    /// Best fitness so far after each generation, generation 0 first.
    pub fitness_trace: Vec<f64>,
    pub decisions: usize,
    /// Agent answers replaced by rule results.
    pub fallbacks: usize,
    pub total_wall_ms: u64,
    /// Summed backend latency over all decisions.
    pub decision_latency_ms: u64,
    pub params_trace: Vec<AppliedParams>,
    pub pool_path: Option<PathBuf>,
    pub events_path: Option<PathBuf>,
    #[serde(skip)]
    pub pool: ExperiencePool,
}

impl RunResult {
    pub fn mean_decision_latency_ms(&self) -> Option<f64> {
        (self.decisions > 0).then(|| self.decision_latency_ms as f64 / self.decisions as f64)
    }
}

#[derive(Debug, Serialize)]
struct Event<'a> {
    generation: u64,
    features: &'a ElaFeatures,
    directive: &'a Directive,
    params: &'a HyperParams,
    best_fitness: f64,
    fallback: Option<&'a str>,
}

struct Decision {
    directive: Directive,
    params: HyperParams,
    latency_ms: u64,
    fallbacks: usize,
}

fn decide(
    config: &RunConfig,
    map: &ControlMap,
    features: &ElaFeatures,
    pool: &ExperiencePool,
    current: &HyperParams,
) -> Decision {
    let family = current.family();
    let k = config.examples_k;
    // With features the pool is searched by similarity, otherwise by recency.
    let examples: Vec<&ExperienceRecord> = if config.mode.shows_features() {
        pool.retrieve_similar(features, k)
    } else {
        pool.recent(k).iter().collect()
    };
    let shown = config.mode.shows_features().then_some(features);
    if config.mode.chained() {
        let recent: Vec<&ExperienceRecord> = pool.recent(k).iter().collect();
        let a = reasoning::analyst(&config.backend, family, shown, &recent, map);
        let b = reasoning::actuator(&config.backend, &a.value, map, current, &examples);
        Decision {
            directive: a.value,
            params: b.value,
            latency_ms: a.latency_ms + b.latency_ms,
            fallbacks: usize::from(a.fallback.is_some()) + usize::from(b.fallback.is_some()),
        }
    } else {
        let m = reasoning::merged(&config.backend, shown, current, &examples);
        let (directive, params) = m.value;
        Decision { directive, params, latency_ms: m.latency_ms, fallbacks: usize::from(m.fallback.is_some()) }
    }
}

fn problem_summary(instance: &ProblemInstance) -> String {
    format!("{:?} instance {} with {} nodes (minimize)", instance.kind(), instance.name(), instance.dimension())
}

/// Runs the loop on a fresh engine built from `config`.
pub fn run(config: &RunConfig) -> Result<RunResult, RunError> {
    config.validate()?;
    let mut engine = EngineState::init(config.instance.clone(), config.algorithm, &config.initial_params, config.seed)
        .map_err(|source| RunError::Engine { generation: 0, source })?;
    run_engine(&mut engine, config)
}

/// Runs the loop on any engine; `config.instance` supplies only naming and
/// the best-known value.
pub fn run_engine(engine: &mut dyn Engine, config: &RunConfig) -> Result<RunResult, RunError> {
    config.validate()?;
    let started = Instant::now();
    let max_iter = config.initial_params.max_iterations as u64;
    let f = config.decision_interval as u64;
    let active = config.mode != Mode::StaticBaseline;
    let run_id = config.run_id();

    let mut events = match (&config.output_dir, active) {
        (Some(dir), _) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join(format!("{run_id}.events.jsonl"));
            Some((BufWriter::new(std::fs::File::create(&path)?), path))
        }
        _ => None,
    };

    let mut params = config.initial_params;
    let mut latency_ms = 0;
    let mut fallbacks = 0;
    let map = if active && config.mode.chained() {
        let r = reasoning::strategist(&config.backend, config.algorithm.family(), &problem_summary(&config.instance));
        latency_ms += r.latency_ms;
        fallbacks += usize::from(r.fallback.is_some());
        r.value
    } else {
        reasoning::rules::canonical_map(config.algorithm.family())
    };

    let mut window = HistoryWindow::new(config.window).map_err(|source| RunError::Ela { generation: 0, source })?;
    let mut pool = ExperiencePool::new();
    let mut pending: Option<(ExperienceRecord, f64)> = None;
    let mut params_trace = Vec::new();
    let mut decisions = 0;
    let best = |e: &dyn Engine| e.best().fitness.expect("engine keeps its best evaluated");
    let mut trace = vec![best(engine)];

    if active {
        let snap = engine.snapshot().map_err(|source| RunError::Ela { generation: 0, source })?;
        window
            .push(snap.fitness().generation(), snap.fitness().mean())
            .map_err(|source| RunError::Ela { generation: 0, source })?;
    }

    for g in 1..=max_iter {
        engine.step(&params).map_err(|source| RunError::Engine { generation: g, source })?;
        let best_now = best(engine);
        trace.push(best_now);
        if !active {
            continue;
        }
        let ela_err = |source| RunError::Ela { generation: g, source };
        let snap = engine.snapshot().map_err(ela_err)?;
        if g % f != 0 {
            window.push(snap.fitness().generation(), snap.fitness().mean()).map_err(ela_err)?;
            continue;
        }
        let features = ela::compute_all(&snap, &mut window, &Hamming, config.ela_quantile).map_err(ela_err)?;
        if let Some((mut record, best_then)) = pending.take() {
            record.outcome_delta = best_then - best_now;
            pool.append(record)?;
        }
        let decision = decide(config, &map, &features, &pool, &params);
        latency_ms += decision.latency_ms;
        fallbacks += decision.fallbacks;
        let before = params;
        params = decision.params;
        params_trace.push(AppliedParams { generation: g, params });
        decisions += 1;
        if let Some((out, _)) = &mut events {
            let event = Event {
                generation: g,
                features: &features,
                directive: &decision.directive,
                params: &params,
                best_fitness: best_now,
                fallback: (decision.fallbacks > 0).then_some("rule substitute"),
            };
            serde_json::to_writer(&mut *out, &event).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        pending = Some((
            ExperienceRecord {
                generation: g,
                features,
                directive: decision.directive,
                params_before: before,
                params_after: params,
                outcome_delta: 0.0,
                wall_time_ms: decision.latency_ms,
            },
            best_now,
        ));
    }
    let best_fitness = best(engine);
    if let Some((mut record, best_then)) = pending.take() {
        record.outcome_delta = best_then - best_fitness;
        pool.append(record)?;
    }

    let mut pool_path = None;
    let mut events_path = None;
    if let Some((mut out, path)) = events {
        out.flush()?;
        events_path = Some(path);
    }
    if let Some(dir) = &config.output_dir {
        let path = dir.join(format!("{run_id}.pool.jsonl"));
        pool.save_jsonl(&path)?;
        pool_path = Some(path);
    }

    let best_known = config.instance.best_known();
    let result = RunResult {
        run_id: run_id.clone(),
        instance: config.instance.name().to_string(),
        algorithm: config.algorithm,
        mode: config.mode,
        backend: if active { config.backend.label() } else { "none" }.to_string(),
        decision_interval: config.decision_interval,
        seed: config.seed,
        best_fitness,
        best_code: engine.best().code.clone(),
        best_known,
        opt_gap_pct: best_known.and_then(|b| opt_gap(best_fitness, b).ok()),
        fitness_trace: trace,
        decisions,
        fallbacks,
        total_wall_ms: started.elapsed().as_millis() as u64,
        decision_latency_ms: latency_ms,
        params_trace,
        pool_path,
        events_path,
        pool,
    };
    if let Some(dir) = &config.output_dir {
        write_result(&dir.join(format!("{run_id}.result.json")), &result)?;
    }
    Ok(result)
}

fn write_result(path: &Path, result: &RunResult) -> Result<(), RunError> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut out, result).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exclusion {
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepeatedSummary {
    pub runs: Vec<RunResult>,
    pub excluded: Vec<Exclusion>,
    pub mean_best: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std_best: f64,
    pub min_best: f64,
    /// Present only when every completed run has a gap.
    pub mean_opt_gap_pct: Option<f64>,
    pub std_opt_gap_pct: Option<f64>,
    pub mean_wall_ms: f64,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Runs seeds `seed .. seed + repeats` in parallel on the current rayon pool.
/// Failed runs are logged and excluded from the aggregates.
pub fn run_repeated(config: &RunConfig, repeats: usize) -> Result<RepeatedSummary, RunError> {
    if repeats == 0 {
        return Err(RunError::Config("repeats must be at least 1".into()));
    }
    config.validate()?;
    let outcomes: Vec<(u64, Result<RunResult, RunError>)> = (0..repeats as u64)
        .into_par_iter()
        .map(|i| {
            let mut c = config.clone();
            c.seed = config.seed + i;
            (c.seed, run(&c))
        })
        .collect();
    let mut runs = Vec::new();
    let mut excluded = Vec::new();
    for (seed, outcome) in outcomes {
        match outcome {
            Ok(r) => runs.push(r),
            Err(e) => {
                log::warn!("run {} seed {seed} excluded: {e}", config.label);
                excluded.push(Exclusion { seed, error: e.to_string() });
            }
        }
    }
    if runs.is_empty() {
        return Err(RunError::AllFailed(repeats));
    }
    Ok(summarize(runs, excluded))
}

pub fn summarize(runs: Vec<RunResult>, excluded: Vec<Exclusion>) -> RepeatedSummary {
    let bests: Vec<f64> = runs.iter().map(|r| r.best_fitness).collect();
    let (mean_best, std_best) = mean_std(&bests);
    let gaps: Option<Vec<f64>> = runs.iter().map(|r| r.opt_gap_pct).collect();
    let gap_stats = gaps.map(|g| mean_std(&g));
    let walls: Vec<f64> = runs.iter().map(|r| r.total_wall_ms as f64).collect();
    RepeatedSummary {
        mean_best,
        std_best,
        min_best: bests.iter().copied().fold(f64::INFINITY, f64::min),
        mean_opt_gap_pct: gap_stats.map(|s| s.0),
        std_opt_gap_pct: gap_stats.map(|s| s.1),
        mean_wall_ms: mean_std(&walls).0,
        runs,
        excluded,
    }
}
