//! Problem instances and their objectives.
//!
//! All four problem kinds are encoded as permutations so a single family of
//! engines and a single distance metric (positional Hamming) serve them all:
//!
//! | kind | code                                 | objective                         |
//! |------|--------------------------------------|-----------------------------------|
//! | TSP  | permutation of cities                | closed tour length                |
//! | UAV  | permutation of sensor nodes          | closed trajectory length          |
//! | FSSP | permutation of jobs                  | makespan                          |
//! | CVRP | giant tour over customers            | total length after greedy split   |

mod best_known;
mod taillard;
mod tsplib;
mod uav;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use best_known::BestKnownTable;
pub use taillard::{parse_taillard, parse_taillard_all, serialize_taillard};
pub use tsplib::{parse_tsplib, parse_vrplib, serialize_tsplib, serialize_vrplib};
pub use uav::generate_uav_instance;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("code of length {got} for an instance of dimension {expected}")]
    CodeLength { expected: usize, got: usize },
    #[error("code is not a permutation: value {0} is repeated or out of range")]
    NotPermutation(usize),
    #[error("best-known value must be positive, got {0}")]
    BadBestKnown(f64),
    #[error("invalid instance: {0}")]
    Invalid(String),
}

impl ProblemError {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Self::Parse { line, message: message.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProblemKind {
    Tsp,
    Cvrp,
    Fssp,
    Uav,
}

/// How Euclidean distances are turned into edge weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rounding {
    /// TSPLIB `EUC_2D`: nearest integer.
    Nearest,
    /// TSPLIB `CEIL_2D`.
    Ceil,
    /// Unrounded Euclidean distance.
    Exact,
}

impl Rounding {
    fn apply(self, d: f64) -> f64 {
        match self {
            Rounding::Nearest => (d + 0.5).floor(),
            Rounding::Ceil => d.ceil(),
            Rounding::Exact => d,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// TSP and UAV.
    Tour { coords: Vec<(f64, f64)>, rounding: Rounding },
    Cvrp {
        coords: Vec<(f64, f64)>,
        demands: Vec<u64>,
        capacity: u64,
        depot: usize,
        rounding: Rounding,
    },
    /// `times[job][machine]`.
    FlowShop { times: Vec<Vec<u64>>, header: Option<TaillardHeader> },
}

/// Header values carried by Taillard files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaillardHeader {
    pub seed: u64,
    pub upper_bound: u64,
    pub lower_bound: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    kind: ProblemKind,
    name: String,
    payload: Payload,
    best_known: Option<f64>,
    // Dense edge weights between coded elements (cities or customers), plus
    // depot legs for CVRP.
    matrix: Vec<f64>,
    depot_legs: Vec<f64>,
    // CVRP: node index of each customer code.
    customers: Vec<usize>,
}

fn euclid(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

impl ProblemInstance {
    pub fn new(kind: ProblemKind, name: impl Into<String>, payload: Payload) -> Result<Self, ProblemError> {
        let name = name.into();
        let mut matrix = Vec::new();
        let mut depot_legs = Vec::new();
        let mut customers = Vec::new();
        match (&payload, kind) {
            (Payload::Tour { coords, rounding }, ProblemKind::Tsp | ProblemKind::Uav) => {
                if coords.len() < 2 {
                    return Err(ProblemError::Invalid(format!("{} cities, need at least 2", coords.len())));
                }
                if coords.iter().any(|c| !c.0.is_finite() || !c.1.is_finite()) {
                    return Err(ProblemError::Invalid("non-finite coordinate".into()));
                }
                let n = coords.len();
                matrix = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..n {
                        matrix[i * n + j] = rounding.apply(euclid(coords[i], coords[j]));
                    }
                }
            }
            (Payload::Cvrp { coords, demands, capacity, depot, rounding }, ProblemKind::Cvrp) => {
                if coords.len() != demands.len() || coords.len() < 3 {
                    return Err(ProblemError::Invalid("CVRP needs a depot and two customers with demands".into()));
                }
                if *depot >= coords.len() {
                    return Err(ProblemError::Invalid(format!("depot {depot} out of range")));
                }
                if demands[*depot] != 0 {
                    return Err(ProblemError::Invalid("depot demand must be 0".into()));
                }
                if let Some(d) = demands.iter().find(|&&d| d > *capacity) {
                    return Err(ProblemError::Invalid(format!("demand {d} exceeds capacity {capacity}")));
                }
                if coords.iter().any(|c| !c.0.is_finite() || !c.1.is_finite()) {
                    return Err(ProblemError::Invalid("non-finite coordinate".into()));
                }
                customers = (0..coords.len()).filter(|i| i != depot).collect();
                let n = customers.len();
                matrix = vec![0.0; n * n];
                for (a, &i) in customers.iter().enumerate() {
                    depot_legs.push(rounding.apply(euclid(coords[*depot], coords[i])));
                    for (b, &j) in customers.iter().enumerate() {
                        matrix[a * n + b] = rounding.apply(euclid(coords[i], coords[j]));
                    }
                }
            }
            (Payload::FlowShop { times, .. }, ProblemKind::Fssp) => {
                let machines = times.first().map_or(0, Vec::len);
                if times.is_empty() || machines == 0 {
                    return Err(ProblemError::Invalid("flow shop needs at least one job and machine".into()));
                }
                if times.iter().any(|row| row.len() != machines) {
                    return Err(ProblemError::Invalid("ragged processing-time matrix".into()));
                }
            }
            _ => return Err(ProblemError::Invalid(format!("payload does not match kind {kind:?}"))),
        }
        Ok(Self { kind, name, payload, best_known: None, matrix, depot_legs, customers })
    }

    pub fn with_best_known(mut self, value: Option<f64>) -> Self {
        self.best_known = value;
        self
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn payload(&self) -> &Payload {
        &self.payload
    }

    pub fn best_known(&self) -> Option<f64> {
        self.best_known
    }

    /// Number of coded elements: cities, customers, jobs or sensor nodes.
    pub fn dimension(&self) -> usize {
        match &self.payload {
            Payload::Tour { coords, .. } => coords.len(),
            Payload::Cvrp { .. } => self.customers.len(),
            Payload::FlowShop { times, .. } => times.len(),
        }
    }

    /// Edge weight between two coded elements, if the kind has one.
    #[inline]
    pub fn edge(&self, a: usize, b: usize) -> Option<f64> {
        if self.matrix.is_empty() {
            None
        } else {
            Some(self.matrix[a * self.dimension() + b])
        }
    }

    /// Whether the objective is a closed tour over the code, so 2-opt moves
    /// can be scored in O(1).
    pub fn is_closed_tour(&self) -> bool {
        matches!(self.kind, ProblemKind::Tsp | ProblemKind::Uav)
    }

    /// Objective of a valid code.
    pub fn evaluate(&self, code: &[usize]) -> Result<f64, ProblemError> {
        check_permutation(code, self.dimension())?;
        Ok(self.cost(code))
    }

    /// Objective without validating the code.
    pub(crate) fn cost(&self, code: &[usize]) -> f64 {
        match &self.payload {
            Payload::Tour { .. } => {
                let n = self.dimension();
                let mut total = 0.0;
                for w in code.windows(2) {
                    total += self.matrix[w[0] * n + w[1]];
                }
                total + self.matrix[code[code.len() - 1] * n + code[0]]
            }
            Payload::Cvrp { .. } => self.split_routes(code).1,
            Payload::FlowShop { times, .. } => makespan(times, code),
        }
    }

    /// Greedy capacity split of a giant tour: routes (as customer codes) and
    /// their total length.
    pub fn split_routes(&self, code: &[usize]) -> (Vec<Vec<usize>>, f64) {
        let Payload::Cvrp { demands, capacity, .. } = &self.payload else {
            return (vec![code.to_vec()], self.cost(code));
        };
        let n = self.customers.len();
        let mut routes: Vec<Vec<usize>> = Vec::new();
        let mut current: Vec<usize> = Vec::new();
        let mut load = 0u64;
        let mut total = 0.0;
        for &c in code {
            let demand = demands[self.customers[c]];
            if let Some(&last) = current.last() {
                if load + demand > *capacity {
                    total += self.depot_legs[last];
                    routes.push(std::mem::take(&mut current));
                    load = 0;
                } else {
                    total += self.matrix[last * n + c];
                }
            }
            if current.is_empty() {
                total += self.depot_legs[c];
            }
            current.push(c);
            load += demand;
        }
        if let Some(&last) = current.last() {
            total += self.depot_legs[last];
            routes.push(current);
        }
        (routes, total)
    }

    /// Demand of a customer code (CVRP only).
    pub fn demand(&self, code: usize) -> Option<u64> {
        match &self.payload {
            Payload::Cvrp { demands, .. } => Some(demands[self.customers[code]]),
            _ => None,
        }
    }

    pub fn capacity(&self) -> Option<u64> {
        match &self.payload {
            Payload::Cvrp { capacity, .. } => Some(*capacity),
            _ => None,
        }
    }

    pub fn machines(&self) -> Option<usize> {
        match &self.payload {
            Payload::FlowShop { times, .. } => Some(times[0].len()),
            _ => None,
        }
    }
}

/// Permutation flow-shop makespan via the completion-time recurrence.
pub fn makespan(times: &[Vec<u64>], order: &[usize]) -> f64 {
    let machines = times.first().map_or(0, Vec::len);
    let mut completion = vec![0u64; machines];
    for &job in order {
        let mut prev = 0u64;
        for (m, c) in completion.iter_mut().enumerate() {
            *c = (*c).max(prev) + times[job][m];
            prev = *c;
        }
    }
    completion.last().copied().unwrap_or(0) as f64
}

/// Checks that `code` is a permutation of `0..n`.
pub fn check_permutation(code: &[usize], n: usize) -> Result<(), ProblemError> {
    if code.len() != n {
        return Err(ProblemError::CodeLength { expected: n, got: code.len() });
    }
    let mut seen = vec![false; n];
    for &c in code {
        if c >= n || seen[c] {
            return Err(ProblemError::NotPermutation(c));
        }
        seen[c] = true;
    }
    Ok(())
}

/// Percentage gap `100·(result − best)/best`.
///
/// A negative gap means the best-known table is stale; it is returned as is
/// and a warning is logged.
pub fn opt_gap(result: f64, best_known: f64) -> Result<f64, ProblemError> {
    if !(best_known > 0.0) {
        return Err(ProblemError::BadBestKnown(best_known));
    }
    let gap = 100.0 * (result - best_known) / best_known;
    if gap < 0.0 {
        log::warn!("result {result} beats best-known {best_known}; best-known table may be stale");
    }
    Ok(gap)
}

/// A permutation code together with its cached objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub code: Vec<usize>,
    pub fitness: Option<f64>,
}

impl Solution {
    pub fn evaluated(instance: &ProblemInstance, code: Vec<usize>) -> Result<Self, ProblemError> {
        let fitness = instance.evaluate(&code)?;
        Ok(Self { code, fitness: Some(fitness) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> ProblemInstance {
        let coords = vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
        ProblemInstance::new(ProblemKind::Tsp, "square", Payload::Tour { coords, rounding: Rounding::Exact }).unwrap()
    }

    fn flow(times: Vec<Vec<u64>>) -> ProblemInstance {
        ProblemInstance::new(ProblemKind::Fssp, "fs", Payload::FlowShop { times, header: None }).unwrap()
    }

    #[test]
    fn unit_square_perimeter() {
        assert_eq!(square().evaluate(&[0, 1, 2, 3]).unwrap(), 4.0);
        let crossing = square().evaluate(&[0, 2, 1, 3]).unwrap();
        assert!((crossing - (2.0 + 2.0 * 2f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn flow_shop_examples() {
        assert_eq!(flow(vec![vec![7]]).evaluate(&[0]).unwrap(), 7.0);
        // job 0: m0 [0,1], m1 [1,3]; job 1: m0 [1,4], m1 [4,5]
        assert_eq!(flow(vec![vec![1, 2], vec![3, 1]]).evaluate(&[0, 1]).unwrap(), 5.0);
    }

    #[test]
    fn invalid_codes_rejected() {
        let sq = square();
        assert!(matches!(sq.evaluate(&[0, 1, 2]), Err(ProblemError::CodeLength { .. })));
        assert!(matches!(sq.evaluate(&[0, 1, 1, 3]), Err(ProblemError::NotPermutation(1))));
        assert!(matches!(sq.evaluate(&[0, 1, 2, 4]), Err(ProblemError::NotPermutation(4))));
    }

    #[test]
    fn gap_examples() {
        assert_eq!(opt_gap(426.0, 426.0).unwrap(), 0.0);
        assert!((opt_gap(440.0, 400.0).unwrap() - 10.0).abs() < 1e-12);
        assert!(opt_gap(390.0, 400.0).unwrap() < 0.0);
        assert!(opt_gap(1.0, 0.0).is_err());
    }

    #[test]
    fn cvrp_split_respects_capacity() {
        // depot at origin, four customers on a line with demand 3, capacity 5
        let coords = vec![(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0), (4.0, 0.0)];
        let inst = ProblemInstance::new(
            ProblemKind::Cvrp,
            "line",
            Payload::Cvrp { coords, demands: vec![0, 3, 3, 2, 2], capacity: 5, depot: 0, rounding: Rounding::Exact },
        )
        .unwrap();
        assert_eq!(inst.dimension(), 4);
        let (routes, len) = inst.split_routes(&[0, 1, 2, 3]);
        assert_eq!(routes, vec![vec![0], vec![1, 2], vec![3]]);
        // 1+1, 2+1+3, 4+4
        assert_eq!(len, 2.0 + 6.0 + 8.0);
        assert_eq!(inst.evaluate(&[0, 1, 2, 3]).unwrap(), len);
    }

    #[test]
    fn cvrp_invariants_enforced() {
        let coords = vec![(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)];
        let bad_depot = Payload::Cvrp { coords: coords.clone(), demands: vec![1, 1, 1], capacity: 5, depot: 0, rounding: Rounding::Exact };
        assert!(ProblemInstance::new(ProblemKind::Cvrp, "x", bad_depot).is_err());
        let over = Payload::Cvrp { coords, demands: vec![0, 9, 1], capacity: 5, depot: 0, rounding: Rounding::Exact };
        assert!(ProblemInstance::new(ProblemKind::Cvrp, "x", over).is_err());
    }
}
