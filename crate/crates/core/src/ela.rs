//! Online landscape features over a live population.
//!
//! Five scalars summarize the search state of a running optimizer:
//!
//! * skewness and excess kurtosis of the population fitness (1/n moments),
//! * R² of a 1-D quadratic fitted to fitness against distance-to-best,
//! * the dispersion ratio between the elite and the worst fitness quantiles,
//! * variability, the ratio of recent mean fitness to the current mean.
//!
//! Every feature has a documented substitute for degenerate input. When a
//! substitute is used a [`DegeneracyFlag`] is raised so downstream reasoning
//! can tell "no evidence" apart from a measured value.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance for every degeneracy guard.
pub const DEGENERACY_EPS: f64 = 1e-12;
/// Default elite / worst quantile.
pub const DEFAULT_QUANTILE: f64 = 0.10;
/// Default number of previous generations in the variability window.
pub const DEFAULT_WINDOW: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ElaError {
    #[error("fitness sample is empty")]
    EmptySample,
    #[error("fitness value {value} at index {index} is not finite")]
    NonFinite { index: usize, value: f64 },
    #[error("population has {solutions} solutions but {fitness} fitness values")]
    LengthMismatch { solutions: usize, fitness: usize },
    #[error("solution {index} has length {len}, expected {expected}")]
    RaggedSolutions { index: usize, len: usize, expected: usize },
    #[error("solutions must have length >= 2, got {0}")]
    ShortSolutions(usize),
    #[error("{feature} needs at least {needed} individuals, got {got}")]
    TooFewIndividuals { feature: &'static str, needed: usize, got: usize },
    #[error("quantile {0} outside (0, 0.5]")]
    BadQuantile(f64),
    #[error("current mean fitness must be positive, got {0}")]
    NonPositiveMean(f64),
    #[error("generation {got} does not follow {last}")]
    GenerationOrder { last: u64, got: u64 },
    #[error("predictor and fitness lengths differ ({0} vs {1})")]
    PairedLength(usize, usize),
    #[error("window capacity must be positive")]
    ZeroCapacity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DegeneracyFlag {
    ZeroVariance,
    ShortHistory,
    EmptyQuantile,
    FlatLandscape,
}

/// A feature value together with the flag raised when a substitute was used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Guarded {
    pub value: f64,
    pub flag: Option<DegeneracyFlag>,
}

impl Guarded {
    fn measured(value: f64) -> Self {
        Self { value, flag: None }
    }

    fn substituted(value: f64, flag: DegeneracyFlag) -> Self {
        Self { value, flag: Some(flag) }
    }
}

/// Fitness values of one generation (minimization).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessSample {
    values: Vec<f64>,
    generation: u64,
}

impl FitnessSample {
    pub fn new(values: Vec<f64>, generation: u64) -> Result<Self, ElaError> {
        if values.is_empty() {
            return Err(ElaError::EmptySample);
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(ElaError::NonFinite { index, value });
        }
        Ok(Self { values, generation })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Discrete solution codes with their parallel fitness sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedPopulation {
    solutions: Vec<Vec<usize>>,
    fitness: FitnessSample,
}

impl EncodedPopulation {
    pub fn new(solutions: Vec<Vec<usize>>, fitness: FitnessSample) -> Result<Self, ElaError> {
        if solutions.len() != fitness.len() {
            return Err(ElaError::LengthMismatch { solutions: solutions.len(), fitness: fitness.len() });
        }
        let expected = solutions[0].len();
        if expected < 2 {
            return Err(ElaError::ShortSolutions(expected));
        }
        if let Some((index, s)) = solutions.iter().enumerate().find(|(_, s)| s.len() != expected) {
            return Err(ElaError::RaggedSolutions { index, len: s.len(), expected });
        }
        Ok(Self { solutions, fitness })
    }

    pub fn solutions(&self) -> &[Vec<usize>] {
        &self.solutions
    }

    pub fn fitness(&self) -> &FitnessSample {
        &self.fitness
    }

    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }

    /// Member indices sorted by fitness, ties broken by lower index.
    pub fn ranking(&self) -> Vec<usize> {
        let y = self.fitness.values();
        let mut idx: Vec<usize> = (0..y.len()).collect();
        idx.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
        idx
    }

    /// Index of the best member (lowest fitness, lowest index on ties).
    pub fn best_index(&self) -> usize {
        let y = self.fitness.values();
        let mut best = 0;
        for (i, v) in y.iter().enumerate().skip(1) {
            if *v < y[best] {
                best = i;
            }
        }
        best
    }
}

/// Distance between two equal-length solution codes.
pub trait DistanceMetric {
    fn distance(&self, a: &[usize], b: &[usize]) -> f64;
}

/// Positional Hamming distance: number of indices where codes differ.
#[derive(Debug, Clone, Copy, Default)]
pub struct Hamming;

impl DistanceMetric for Hamming {
    fn distance(&self, a: &[usize], b: &[usize]) -> f64 {
        a.iter().zip(b).filter(|(x, y)| x != y).count() as f64
    }
}

/// Mean fitness of the most recent generations, bounded to `capacity` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryWindow {
    entries: VecDeque<(u64, f64)>,
    capacity: usize,
}

impl HistoryWindow {
    pub fn new(capacity: usize) -> Result<Self, ElaError> {
        if capacity == 0 {
            return Err(ElaError::ZeroCapacity);
        }
        Ok(Self { entries: VecDeque::with_capacity(capacity), capacity })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn push(&mut self, generation: u64, mean: f64) -> Result<(), ElaError> {
        if let Some(&(last, _)) = self.entries.back() {
            if generation <= last {
                return Err(ElaError::GenerationOrder { last, got: generation });
            }
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back((generation, mean));
        Ok(())
    }

    fn mean(&self) -> Option<f64> {
        if self.entries.is_empty() {
            None
        } else {
            Some(self.entries.iter().map(|e| e.1).sum::<f64>() / self.entries.len() as f64)
        }
    }
}

/// The machine-readable search state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElaFeatures {
    pub skewness: f64,
    pub kurtosis: f64,
    pub r_squared: f64,
    pub dispersion_ratio: f64,
    pub variability: f64,
    #[serde(rename = "flags")]
    pub degenerate_flags: BTreeSet<DegeneracyFlag>,
}

impl ElaFeatures {
    pub fn has(&self, flag: DegeneracyFlag) -> bool {
        self.degenerate_flags.contains(&flag)
    }

    /// The five scalars in a fixed order.
    pub fn vector(&self) -> [f64; 5] {
        [self.skewness, self.kurtosis, self.r_squared, self.dispersion_ratio, self.variability]
    }

    /// Flat `key=value` rendering used in prompts and logs.
    pub fn to_record(&self) -> String {
        let flags: Vec<String> = self.degenerate_flags.iter().map(|f| format!("{f:?}")).collect();
        format!(
            "skewness={:.6}\nkurtosis={:.6}\nr_squared={:.6}\ndispersion_ratio={:.6}\nvariability={:.6}\nflags=[{}]",
            self.skewness,
            self.kurtosis,
            self.r_squared,
            self.dispersion_ratio,
            self.variability,
            flags.join(",")
        )
    }
}

/// Central moments (m2, m3, m4) with 1/n normalization.
fn central_moments(y: &[f64]) -> (f64, f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in y {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    (m2 / n, m3 / n, m4 / n)
}

pub fn skewness(sample: &FitnessSample) -> Guarded {
    let (m2, m3, _) = central_moments(sample.values());
    let sd = m2.sqrt();
    if sd < DEGENERACY_EPS {
        return Guarded::substituted(0.0, DegeneracyFlag::ZeroVariance);
    }
    Guarded::measured(m3 / (sd * sd * sd))
}

/// Excess kurtosis (normal distribution = 0).
pub fn kurtosis(sample: &FitnessSample) -> Guarded {
    let (m2, _, m4) = central_moments(sample.values());
    if m2.sqrt() < DEGENERACY_EPS {
        return Guarded::substituted(0.0, DegeneracyFlag::ZeroVariance);
    }
    Guarded::measured(m4 / (m2 * m2) - 3.0)
}

/// R² of a least-squares quadratic `a + b·x + c·x²` fitted to `(x, y)`.
///
/// Requires at least three points. When `x` has fewer than three distinct
/// values the highest-degree terms are dropped until the normal equations
/// are solvable. The result is clamped to `[0, 1]`; a flat `y` yields 0 with
/// [`DegeneracyFlag::FlatLandscape`].
pub fn quadratic_r2(x: &[f64], y: &[f64]) -> Result<Guarded, ElaError> {
    if x.len() != y.len() {
        return Err(ElaError::PairedLength(x.len(), y.len()));
    }
    if y.len() < 3 {
        return Err(ElaError::TooFewIndividuals { feature: "meta_model_r2", needed: 3, got: y.len() });
    }
    let n = y.len() as f64;
    let y_mean = y.iter().sum::<f64>() / n;
    let ss_tot: f64 = y.iter().map(|v| (v - y_mean).powi(2)).sum();
    if ss_tot < DEGENERACY_EPS {
        return Ok(Guarded::substituted(0.0, DegeneracyFlag::FlatLandscape));
    }

    // Standardize the predictor so the normal equations stay well conditioned.
    let x_mean = x.iter().sum::<f64>() / n;
    let x_sd = (x.iter().map(|v| (v - x_mean).powi(2)).sum::<f64>() / n).sqrt();
    let z: Vec<f64> = if x_sd < DEGENERACY_EPS {
        vec![0.0; x.len()]
    } else {
        x.iter().map(|v| (v - x_mean) / x_sd).collect()
    };

    let mut coeffs = None;
    for degree in (0..=2usize).rev() {
        if let Some(c) = fit_polynomial(&z, y, degree) {
            coeffs = Some(c);
            break;
        }
    }
    let coeffs = coeffs.expect("degree-0 fit always exists for non-empty input");
    let ss_res: f64 = z
        .iter()
        .zip(y)
        .map(|(&zi, &yi)| {
            let pred = coeffs.iter().rev().fold(0.0, |acc, c| acc * zi + c);
            (yi - pred).powi(2)
        })
        .sum();
    Ok(Guarded::measured((1.0 - ss_res / ss_tot).clamp(0.0, 1.0)))
}

/// Least-squares polynomial coefficients (constant term first), or `None`
/// when the normal matrix is numerically singular.
fn fit_polynomial(z: &[f64], y: &[f64], degree: usize) -> Option<Vec<f64>> {
    let k = degree + 1;
    let mut a = vec![vec![0.0; k + 1]; k];
    for (&zi, &yi) in z.iter().zip(y) {
        let mut powers = vec![1.0; 2 * k - 1];
        for p in 1..powers.len() {
            powers[p] = powers[p - 1] * zi;
        }
        for r in 0..k {
            for c in 0..k {
                a[r][c] += powers[r + c];
            }
            a[r][k] += powers[r] * yi;
        }
    }
    let scale = a.iter().flat_map(|r| r[..k].iter()).fold(0.0f64, |m, v| m.max(v.abs()));
    // Gaussian elimination with partial pivoting.
    for col in 0..k {
        let pivot = (col..k).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() <= 1e-10 * scale.max(1.0) {
            return None;
        }
        a.swap(col, pivot);
        for row in 0..k {
            if row != col {
                let f = a[row][col] / a[col][col];
                for c in col..=k {
                    a[row][c] -= f * a[col][c];
                }
            }
        }
    }
    Some((0..k).map(|i| a[i][k] / a[i][i]).collect())
}

/// R² of fitness regressed on distance to the population-best solution.
pub fn meta_model_r2(pop: &EncodedPopulation, metric: &dyn DistanceMetric) -> Result<Guarded, ElaError> {
    if pop.len() < 3 {
        return Err(ElaError::TooFewIndividuals { feature: "meta_model_r2", needed: 3, got: pop.len() });
    }
    let best = &pop.solutions()[pop.best_index()];
    let x: Vec<f64> = pop.solutions().iter().map(|s| metric.distance(s, best)).collect();
    quadratic_r2(&x, pop.fitness().values())
}

/// Size of the elite and worst sets: `⌈quantile·n⌉`, at least 2.
pub fn quantile_set_size(n: usize, quantile: f64) -> usize {
    ((quantile * n as f64).ceil() as usize).max(2)
}

fn mean_pairwise(pop: &EncodedPopulation, members: &[usize], metric: &dyn DistanceMetric) -> f64 {
    let s = pop.solutions();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (a, &i) in members.iter().enumerate() {
        for &j in &members[a + 1..] {
            total += metric.distance(&s[i], &s[j]);
            pairs += 1;
        }
    }
    total / pairs as f64
}

/// Mean pairwise distance of the elite quantile over that of the worst quantile.
pub fn dispersion_ratio(
    pop: &EncodedPopulation,
    metric: &dyn DistanceMetric,
    quantile: f64,
) -> Result<Guarded, ElaError> {
    if !(quantile > 0.0 && quantile <= 0.5) {
        return Err(ElaError::BadQuantile(quantile));
    }
    let n = pop.len();
    if n < 4 {
        return Err(ElaError::TooFewIndividuals { feature: "dispersion_ratio", needed: 4, got: n });
    }
    let k = quantile_set_size(n, quantile).min(n);
    let ranking = pop.ranking();
    let d_best = mean_pairwise(pop, &ranking[..k], metric);
    let d_worst = mean_pairwise(pop, &ranking[n - k..], metric);
    if d_worst < DEGENERACY_EPS {
        return Ok(Guarded::substituted(1.0, DegeneracyFlag::EmptyQuantile));
    }
    Ok(Guarded::measured(d_best / d_worst))
}

/// Mean of the stored generation means divided by `current_mean`.
pub fn variability(window: &HistoryWindow, current_mean: f64) -> Result<Guarded, ElaError> {
    if !(current_mean > 0.0) {
        return Err(ElaError::NonPositiveMean(current_mean));
    }
    match window.mean() {
        None => Ok(Guarded::substituted(1.0, DegeneracyFlag::ShortHistory)),
        Some(previous) => {
            let v = previous / current_mean;
            if window.len() < window.capacity() {
                Ok(Guarded::substituted(v, DegeneracyFlag::ShortHistory))
            } else {
                Ok(Guarded::measured(v))
            }
        }
    }
}

/// All five features for the current generation.
///
/// The current generation mean is pushed into `window` after variability is
/// computed, so V always compares against strictly earlier generations.
pub fn compute_all(
    pop: &EncodedPopulation,
    window: &mut HistoryWindow,
    metric: &dyn DistanceMetric,
    quantile: f64,
) -> Result<ElaFeatures, ElaError> {
    let sample = pop.fitness();
    let current_mean = sample.mean();
    let parts = [
        skewness(sample),
        kurtosis(sample),
        meta_model_r2(pop, metric)?,
        dispersion_ratio(pop, metric, quantile)?,
        variability(window, current_mean)?,
    ];
    window.push(sample.generation(), current_mean)?;
    Ok(ElaFeatures {
        skewness: parts[0].value,
        kurtosis: parts[1].value,
        r_squared: parts[2].value,
        dispersion_ratio: parts[3].value,
        variability: parts[4].value,
        degenerate_flags: parts.iter().filter_map(|p| p.flag).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(v: &[f64]) -> FitnessSample {
        FitnessSample::new(v.to_vec(), 0).unwrap()
    }

    fn window(means: &[f64], capacity: usize) -> HistoryWindow {
        let mut w = HistoryWindow::new(capacity).unwrap();
        for (g, m) in means.iter().enumerate() {
            w.push(g as u64, *m).unwrap();
        }
        w
    }

    #[test]
    fn skewness_examples() {
        assert_eq!(skewness(&sample(&[1.0, 2.0, 3.0])), Guarded::measured(0.0));
        assert_eq!(skewness(&sample(&[2.0, 2.0, 2.0])), Guarded::substituted(0.0, DegeneracyFlag::ZeroVariance));
        assert!((skewness(&sample(&[1.0, 1.0, 4.0])).value - 0.70711).abs() < 1e-5);
    }

    #[test]
    fn kurtosis_examples() {
        assert!((kurtosis(&sample(&[0.0, 0.0, 1.0, 1.0])).value + 2.0).abs() < 1e-12);
        assert_eq!(kurtosis(&sample(&[5.0; 4])), Guarded::substituted(0.0, DegeneracyFlag::ZeroVariance));
        assert!((kurtosis(&sample(&[1.0, 1.0, 4.0])).value + 1.5).abs() < 1e-9);
    }

    #[test]
    fn empty_and_non_finite_samples_rejected() {
        assert_eq!(FitnessSample::new(vec![], 0), Err(ElaError::EmptySample));
        assert!(matches!(FitnessSample::new(vec![1.0, f64::NAN], 0), Err(ElaError::NonFinite { index: 1, .. })));
    }

    #[test]
    fn r2_examples() {
        let x = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        assert!((quadratic_r2(&x, &y).unwrap().value - 1.0).abs() < 1e-12);
        assert_eq!(
            quadratic_r2(&x, &[3.0; 5]).unwrap(),
            Guarded::substituted(0.0, DegeneracyFlag::FlatLandscape)
        );
        let r = quadratic_r2(&[0.0, 1.0, 2.0, 3.0], &[1.0, 1.0, 2.0, 2.0]).unwrap();
        assert!((r.value - 0.8).abs() < 1e-9);
        assert!(quadratic_r2(&[0.0, 1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn r2_with_two_distinct_predictors_falls_back_to_linear() {
        // Two distinct x values: the best linear fit interpolates group means.
        let r = quadratic_r2(&[0.0, 0.0, 1.0, 1.0], &[1.0, 3.0, 5.0, 7.0]).unwrap();
        // SSres = 4, SStot = 20
        assert!((r.value - 0.8).abs() < 1e-9);
        // Single predictor value: constant model, R² = 0.
        assert_eq!(quadratic_r2(&[2.0; 3], &[1.0, 2.0, 3.0]).unwrap().value, 0.0);
    }

    #[test]
    fn variability_examples() {
        assert_eq!(variability(&window(&[10.0; 5], 5), 5.0).unwrap(), Guarded::measured(2.0));
        assert_eq!(
            variability(&window(&[10.0; 3], 5), 10.0).unwrap(),
            Guarded::substituted(1.0, DegeneracyFlag::ShortHistory)
        );
        assert!((variability(&window(&[8.0, 9.0, 10.0], 3), 12.0).unwrap().value - 0.75).abs() < 1e-12);
        assert_eq!(
            variability(&window(&[], 5), 3.0).unwrap(),
            Guarded::substituted(1.0, DegeneracyFlag::ShortHistory)
        );
        assert!(variability(&window(&[1.0], 5), 0.0).is_err());
    }

    #[test]
    fn window_is_bounded_and_ordered() {
        let mut w = window(&[1.0, 2.0, 3.0, 4.0], 3);
        assert_eq!(w.entries().map(|e| e.0).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert!(w.push(3, 1.0).is_err());
        assert!(HistoryWindow::new(0).is_err());
    }

    #[test]
    fn dispersion_guards() {
        let sols = vec![vec![0, 1, 2], vec![0, 1, 2], vec![2, 1, 0], vec![2, 1, 0]];
        let pop = EncodedPopulation::new(sols, sample(&[1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(
            dispersion_ratio(&pop, &Hamming, 0.1).unwrap(),
            Guarded::substituted(1.0, DegeneracyFlag::EmptyQuantile)
        );
        assert!(matches!(dispersion_ratio(&pop, &Hamming, 0.0), Err(ElaError::BadQuantile(_))));
        assert!(matches!(dispersion_ratio(&pop, &Hamming, 0.6), Err(ElaError::BadQuantile(_))));
        let small = EncodedPopulation::new(vec![vec![0, 1]; 3], sample(&[1.0, 2.0, 3.0])).unwrap();
        assert!(dispersion_ratio(&small, &Hamming, 0.1).is_err());
    }

    #[test]
    fn population_shape_is_validated() {
        assert!(EncodedPopulation::new(vec![vec![0, 1]], sample(&[1.0, 2.0])).is_err());
        assert!(EncodedPopulation::new(vec![vec![0]], sample(&[1.0])).is_err());
        assert!(EncodedPopulation::new(vec![vec![0, 1], vec![0, 1, 2]], sample(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn record_has_all_keys() {
        let f = ElaFeatures {
            skewness: 0.1,
            kurtosis: -1.0,
            r_squared: 0.5,
            dispersion_ratio: 0.3,
            variability: 1.2,
            degenerate_flags: [DegeneracyFlag::ShortHistory].into_iter().collect(),
        };
        let r = f.to_record();
        for key in ["skewness=", "kurtosis=", "r_squared=", "dispersion_ratio=", "variability=", "flags=[ShortHistory]"] {
            assert!(r.contains(key), "{key} missing from {r}");
        }
        let json = serde_json::to_value(&f).unwrap();
        assert_eq!(json["flags"][0], "ShortHistory");
    }
}
