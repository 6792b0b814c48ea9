//! Experiment definition files.
//!
//! A spec is TOML. Top-level keys set defaults; each `[[experiment]]` table
//! expands to the cross product of its instances, algorithms, modes and
//! decision intervals.
//!
//! ```toml
//! repeats = 10          # runs per cell, seeds seed .. seed + repeats
//! seed = 1
//! backend = "rule"      # or "llm"
//! data_dir = "data"     # instance paths and globs are relative to this
//! output_dir = "results"
//! convergence = true    # write per-run convergence CSVs with the report
//!
//! [llm]                 # only read with backend = "llm"
//! base_url = "https://api.example.com/v1"
//! model = "some-model"
//!
//! [[experiment]]
//! instances = ["eil51.tsp", "ta0*.txt", "uav:20:1"]
//! algorithms = ["ga-2opt"]
//! modes = ["full", "static"]
//! intervals = [1]
//! population = 100
//! iterations = 200
//! params = { mutation_prob = 0.2 }
//! ```

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{Context, Result};
use elaloop::controller::Mode;
use elaloop::metaheuristics::Algorithm;
use serde::{Deserialize, Deserializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Rule,
    Llm,
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rule" => Ok(BackendKind::Rule),
            "llm" => Ok(BackendKind::Llm),
            other => Err(format!("unknown backend {other:?} (expected rule or llm)")),
        }
    }
}

impl BackendKind {
    pub fn label(self) -> &'static str {
        match self {
            BackendKind::Rule => "rule",
            BackendKind::Llm => "llm",
        }
    }
}

fn parsed<'de, D, T>(d: D) -> Result<Vec<T>, D::Error>
where
    D: Deserializer<'de>,
    T: FromStr<Err = String>,
{
    Vec::<String>::deserialize(d)?.iter().map(|s| s.parse().map_err(serde::de::Error::custom)).collect()
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmSection {
    pub base_url: String,
    pub model: String,
    pub timeout_ms: Option<u64>,
    pub max_retries: Option<u32>,
    pub temperature: Option<f64>,
    pub concurrency_limit: Option<usize>,
    pub debug_log: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub instances: Vec<String>,
    #[serde(deserialize_with = "parsed")]
    pub algorithms: Vec<Algorithm>,
    #[serde(default = "default_modes", deserialize_with = "parsed")]
    pub modes: Vec<Mode>,
    #[serde(default = "default_intervals")]
    pub intervals: Vec<usize>,
    pub population: Option<usize>,
    pub iterations: Option<usize>,
    pub quantile: Option<f64>,
    pub window: Option<usize>,
    pub examples: Option<usize>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

fn default_modes() -> Vec<Mode> {
    vec![Mode::Full]
}

fn default_intervals() -> Vec<usize> {
    vec![1]
}

fn default_repeats() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub seed: u64,
    pub backend: Option<BackendKind>,
    pub data_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub best_known: Option<PathBuf>,
    #[serde(default = "yes")]
    pub convergence: bool,
    pub llm: Option<LlmSection>,
    #[serde(rename = "experiment")]
    pub experiments: Vec<Experiment>,
}

fn yes() -> bool {
    true
}

/// The standard frequency sweep.
pub const SWEEP_INTERVALS: [usize; 4] = [1, 3, 5, 10];

impl ExperimentSpec {
    /// Parses and checks a spec; errors carry line and column.
    pub fn parse(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = toml::from_str(text).map_err(|e| anyhow::anyhow!("{e}"))?;
        spec.check()?;
        Ok(spec)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading spec {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in spec {}", path.display()))
    }

    fn check(&self) -> Result<()> {
        anyhow::ensure!(self.repeats >= 1, "repeats must be at least 1");
        anyhow::ensure!(!self.experiments.is_empty(), "spec has no [[experiment]] tables");
        for (i, e) in self.experiments.iter().enumerate() {
            let at = || format!("experiment #{}", i + 1);
            anyhow::ensure!(!e.instances.is_empty(), "{}: no instances", at());
            anyhow::ensure!(!e.algorithms.is_empty(), "{}: no algorithms", at());
            anyhow::ensure!(!e.modes.is_empty(), "{}: no modes", at());
            anyhow::ensure!(e.intervals.iter().all(|&f| f > 0), "{}: intervals must be positive", at());
            anyhow::ensure!(!e.intervals.is_empty(), "{}: no intervals", at());
        }
        Ok(())
    }

    /// Replaces every experiment's modes with the four-way component grid.
    pub fn ablation(mut self) -> Self {
        for e in &mut self.experiments {
            e.modes = Mode::ABLATION.to_vec();
        }
        self
    }

    /// Replaces every experiment's intervals with the standard sweep.
    pub fn frequency_sweep(mut self) -> Self {
        for e in &mut self.experiments {
            e.intervals = SWEEP_INTERVALS.to_vec();
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[[experiment]]
instances = ["eil51.tsp"]
algorithms = ["ga"]
"#;

    #[test]
    fn defaults() {
        let s = ExperimentSpec::parse(MINIMAL).unwrap();
        assert_eq!(s.repeats, 1);
        assert_eq!(s.experiments[0].modes, vec![Mode::Full]);
        assert_eq!(s.experiments[0].intervals, vec![1]);
        assert!(s.convergence);
    }

    #[test]
    fn full_grammar() {
        let s = ExperimentSpec::parse(
            r#"
repeats = 3
seed = 9
backend = "llm"
[llm]
base_url = "http://localhost:1"
model = "m"
[[experiment]]
instances = ["a.tsp", "uav:10:2"]
algorithms = ["ga-2opt", "aco"]
modes = ["static", "no-ela-no-cor"]
intervals = [1, 5]
population = 50
params = { mutation_prob = 0.3 }
"#,
        )
        .unwrap();
        assert_eq!(s.backend, Some(BackendKind::Llm));
        let e = &s.experiments[0];
        assert_eq!(e.algorithms, vec![Algorithm::Ga2Opt, Algorithm::Aco]);
        assert_eq!(e.modes, vec![Mode::StaticBaseline, Mode::NoElaNoCor]);
        assert_eq!(e.params["mutation_prob"], 0.3);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = "repeats = 2\n\n[[experiment]]\ninstances = [\"x.tsp\"]\nalgorithms = [\"sa\"]\n";
        let msg = format!("{:#}", ExperimentSpec::parse(bad).unwrap_err());
        assert!(msg.contains("line 5"), "{msg}");
        assert!(msg.contains("unknown algorithm"), "{msg}");
        let bad = "repeats = 2\nrepeat = 3\n[[experiment]]\ninstances = []\nalgorithms = []\n";
        let msg = format!("{:#}", ExperimentSpec::parse(bad).unwrap_err());
        assert!(msg.contains("line 2"), "{msg}");
        let msg = format!("{:#}", ExperimentSpec::parse("repeats = \n").unwrap_err());
        assert!(msg.contains("line 1"), "{msg}");
    }

    #[test]
    fn grid_expansions() {
        let s = ExperimentSpec::parse(MINIMAL).unwrap();
        assert_eq!(s.clone().ablation().experiments[0].modes.len(), 4);
        assert_eq!(s.frequency_sweep().experiments[0].intervals, SWEEP_INTERVALS.to_vec());
    }
}
