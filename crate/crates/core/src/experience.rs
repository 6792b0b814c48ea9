//! Append-only memory of control decisions and their outcomes.

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ela::{ElaFeatures, DEGENERACY_EPS};
use crate::metaheuristics::HyperParams;
use crate::reasoning::Directive;

/// In-context examples handed to the actuator by default.
pub const DEFAULT_EXAMPLES: usize = 4;

#[derive(Debug, Error)]
pub enum PoolError {
    #[error("record for generation {got} does not follow generation {last}")]
    OutOfOrder { last: u64, got: u64 },
    #[error("record violates its invariants: {0}")]
    InvalidRecord(String),
    #[error("line {line}: {source}")]
    Decode { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperienceRecord {
    pub generation: u64,
    pub features: ElaFeatures,
    pub directive: Directive,
    pub params_before: HyperParams,
    pub params_after: HyperParams,
    /// Best-fitness improvement over the following decision interval
    /// (positive = improved).
    pub outcome_delta: f64,
    /// Time spent waiting on the reasoning backend for this decision.
    pub wall_time_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperiencePool {
    records: Vec<ExperienceRecord>,
}

impl ExperiencePool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[ExperienceRecord] {
        &self.records
    }

    pub fn append(&mut self, record: ExperienceRecord) -> Result<(), PoolError> {
        if let Some(last) = self.records.last() {
            if record.generation <= last.generation {
                return Err(PoolError::OutOfOrder { last: last.generation, got: record.generation });
            }
        }
        if !record.outcome_delta.is_finite() {
            return Err(PoolError::InvalidRecord(format!("outcome_delta {}", record.outcome_delta)));
        }
        if !record.params_after.within_bounds() {
            return Err(PoolError::InvalidRecord("params_after out of bounds".into()));
        }
        self.records.push(record);
        Ok(())
    }

    /// The `k` most recent records, oldest first.
    pub fn recent(&self, k: usize) -> &[ExperienceRecord] {
        &self.records[self.records.len().saturating_sub(k)..]
    }

    /// Up to `k` records closest to `features` in z-scored feature space,
    /// nearest first; equal distances favor newer records.
    pub fn retrieve_similar(&self, features: &ElaFeatures, k: usize) -> Vec<&ExperienceRecord> {
        if self.records.is_empty() || k == 0 {
            return Vec::new();
        }
        let n = self.records.len() as f64;
        let mut mean = [0.0; 5];
        for r in &self.records {
            for (m, v) in mean.iter_mut().zip(r.features.vector()) {
                *m += v / n;
            }
        }
        let mut scale = [0.0; 5];
        for r in &self.records {
            for ((s, v), m) in scale.iter_mut().zip(r.features.vector()).zip(mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        for s in &mut scale {
            *s = if s.sqrt() < DEGENERACY_EPS { 1.0 } else { s.sqrt() };
        }
        let query = features.vector();
        let mut scored: Vec<(f64, usize)> = self
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let d2: f64 = r
                    .features
                    .vector()
                    .iter()
                    .zip(query)
                    .zip(scale)
                    .map(|((a, b), s)| ((a - b) / s).powi(2))
                    .sum();
                (d2.sqrt(), i)
            })
            .collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
        scored.into_iter().take(k).map(|(_, i)| &self.records[i]).collect()
    }

    /// Writes one JSON object per line.
    pub fn save_jsonl(&self, path: &Path) -> Result<(), PoolError> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        for r in &self.records {
            serde_json::to_writer(&mut out, r).map_err(|e| PoolError::Decode { line: 0, source: e })?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn load_jsonl(path: &Path) -> Result<Self, PoolError> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut pool = Self::new();
        for (i, line) in file.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record = serde_json::from_str(&line).map_err(|source| PoolError::Decode { line: i + 1, source })?;
            pool.append(record)?;
        }
        Ok(pool)
    }
}
