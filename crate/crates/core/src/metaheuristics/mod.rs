//! Stepwise permutation metaheuristics.
//!
//! Each engine advances one generation per [`Engine::step`] using whatever
//! [`HyperParams`] it is handed, so a controller can swap parameters between
//! generations. The population is observable through [`Engine::snapshot`].
//!
//! Operator choices:
//! * GA: tournament selection (size 3), order crossover, swap mutation,
//!   elitism of one.
//! * PSO: discrete swap-sequence velocities. Inertia keeps each previous swap
//!   with probability `w`; the cognitive and social pulls keep each swap
//!   toward the personal / global best with probability `c·r` (r ~ U[0,1)).
//! * ACO: roulette construction on `τ^α · η^β` with `η = 1/d`, evaporation
//!   by `ρ`, deposit of `1/length` along the iteration-best tour.
//! * 2-opt variants: one first-improvement 2-opt pass over the top decile.

mod aco;
mod operators;
mod params;

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::ela::{EncodedPopulation, ElaError, FitnessSample};
use crate::problems::{ProblemInstance, Solution};
use crate::rng::{stream_rng, EngineRng, Stream};

pub use aco::{transition_probabilities, PHEROMONE_FLOOR};
pub use operators::{
    apply_swaps, order_crossover, random_order_crossover, swap_mutation, swap_sequence, tournament, two_opt_pass,
};
pub use params::{bounds, Algorithm, Clamp, Family, HyperParams, ParamSet, DEFAULT_ITERATIONS, DEFAULT_POPULATION};

pub const TOURNAMENT_SIZE: usize = 3;
/// Fraction of the population polished by 2-opt each generation.
pub const TWO_OPT_FRACTION: f64 = 0.10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("{algorithm} engine cannot run with {got:?} parameters")]
    FamilyMismatch { algorithm: Algorithm, got: Family },
    #[error("invalid cut ({lo}, {hi}) for length {len}")]
    BadCut { lo: usize, hi: usize, len: usize },
    #[error("population size must be positive")]
    EmptyPopulation,
}

/// A steppable optimizer whose state can be observed between generations.
pub trait Engine {
    fn step(&mut self, params: &HyperParams) -> Result<(), EngineError>;
    fn snapshot(&self) -> Result<EncodedPopulation, ElaError>;
    /// Best solution ever observed.
    fn best(&self) -> &Solution;
    fn generation(&self) -> u64;
}

#[derive(Debug, Clone, PartialEq)]
struct Particle {
    velocity: Vec<(usize, usize)>,
    best_code: Vec<usize>,
    best_fitness: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum Extras {
    Ga,
    Pso(Vec<Particle>),
    Aco { pheromone: Vec<f64> },
}

/// Full state of one engine run.
#[derive(Debug, Clone)]
pub struct EngineState {
    algorithm: Algorithm,
    instance: Arc<ProblemInstance>,
    population: Vec<Vec<usize>>,
    fitness: Vec<f64>,
    best: Solution,
    generation: u64,
    rng: EngineRng,
    extras: Extras,
}

impl PartialEq for EngineState {
    fn eq(&self, other: &Self) -> bool {
        self.algorithm == other.algorithm
            && self.population == other.population
            && self.fitness == other.fitness
            && self.best == other.best
            && self.generation == other.generation
            && self.rng == other.rng
            && self.extras == other.extras
    }
}

fn check_family(algorithm: Algorithm, params: &HyperParams) -> Result<(), EngineError> {
    if params.family() != algorithm.family() {
        return Err(EngineError::FamilyMismatch { algorithm, got: params.family() });
    }
    Ok(())
}

impl EngineState {
    /// Random initial population drawn from the engine stream of `seed`.
    pub fn init(
        instance: Arc<ProblemInstance>,
        algorithm: Algorithm,
        params: &HyperParams,
        seed: u64,
    ) -> Result<Self, EngineError> {
        check_family(algorithm, params)?;
        if params.population_size == 0 {
            return Err(EngineError::EmptyPopulation);
        }
        let mut rng = stream_rng(seed, Stream::Engine);
        let n = instance.dimension();
        let population: Vec<Vec<usize>> = (0..params.population_size)
            .map(|_| {
                let mut p: Vec<usize> = (0..n).collect();
                p.shuffle(&mut rng);
                p
            })
            .collect();
        let fitness: Vec<f64> = population.iter().map(|c| instance.cost(c)).collect();
        let extras = match algorithm.family() {
            Family::Ga => Extras::Ga,
            Family::Pso => Extras::Pso(
                population
                    .iter()
                    .zip(&fitness)
                    .map(|(code, &f)| {
                        let len = (n / 10).max(1);
                        let velocity = (0..len).map(|_| (rng.gen_range(0..n), rng.gen_range(0..n))).collect();
                        Particle { velocity, best_code: code.clone(), best_fitness: f }
                    })
                    .collect(),
            ),
            Family::Aco => Extras::Aco { pheromone: vec![1.0; n * n] },
        };
        let best_idx = argmin(&fitness);
        let best = Solution { code: population[best_idx].clone(), fitness: Some(fitness[best_idx]) };
        Ok(Self { algorithm, instance, population, fitness, best, generation: 0, rng, extras })
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn instance(&self) -> &ProblemInstance {
        &self.instance
    }

    pub fn best_fitness(&self) -> f64 {
        self.best.fitness.expect("engine keeps the best evaluated")
    }

    /// Pheromone matrix (ACO only), row-major over coded elements.
    pub fn pheromone(&self) -> Option<&[f64]> {
        match &self.extras {
            Extras::Aco { pheromone } => Some(pheromone),
            _ => None,
        }
    }

    pub fn population(&self) -> &[Vec<usize>] {
        &self.population
    }

    pub fn fitness(&self) -> &[f64] {
        &self.fitness
    }

    fn update_best(&mut self) {
        let i = argmin(&self.fitness);
        if self.fitness[i] < self.best_fitness() {
            self.best = Solution { code: self.population[i].clone(), fitness: Some(self.fitness[i]) };
        }
    }

    fn polish_top_decile(&mut self) {
        let n = self.population.len();
        let k = ((n as f64 * TWO_OPT_FRACTION).ceil() as usize).clamp(1, n);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| self.fitness[a].total_cmp(&self.fitness[b]).then(a.cmp(&b)));
        for &i in &order[..k] {
            self.fitness[i] = two_opt_pass(&self.instance, &mut self.population[i], self.fitness[i]);
        }
    }

    fn step_ga(&mut self, crossover_prob: f64, mutation_prob: f64) {
        let size = self.population.len();
        let elite = argmin(&self.fitness);
        let elite = (self.population[elite].clone(), self.fitness[elite]);
        let mut next: Vec<Vec<usize>> = Vec::with_capacity(size);
        while next.len() < size {
            let a = tournament(&self.fitness, TOURNAMENT_SIZE, &mut self.rng);
            let b = tournament(&self.fitness, TOURNAMENT_SIZE, &mut self.rng);
            let (p1, p2) = (&self.population[a], &self.population[b]);
            let (mut c1, mut c2) = if self.rng.gen::<f64>() < crossover_prob {
                (random_order_crossover(p1, p2, &mut self.rng), random_order_crossover(p2, p1, &mut self.rng))
            } else {
                (p1.clone(), p2.clone())
            };
            for child in [&mut c1, &mut c2] {
                if self.rng.gen::<f64>() < mutation_prob {
                    swap_mutation(child, &mut self.rng);
                }
            }
            next.push(c1);
            if next.len() < size {
                next.push(c2);
            }
        }
        let mut fitness: Vec<f64> = next.iter().map(|c| self.instance.cost(c)).collect();
        let worst = argmax(&fitness);
        next[worst] = elite.0;
        fitness[worst] = elite.1;
        self.population = next;
        self.fitness = fitness;
    }

    fn step_pso(&mut self, inertia: f64, cognitive: f64, social: f64) {
        let Extras::Pso(particles) = &mut self.extras else { unreachable!("family checked") };
        let n = self.instance.dimension();
        let global = self.best.code.clone();
        for (i, particle) in particles.iter_mut().enumerate() {
            let x = &mut self.population[i];
            let mut applied: Vec<(usize, usize)> = Vec::new();
            for &s in &particle.velocity {
                if self.rng.gen::<f64>() < inertia {
                    applied.push(s);
                    x.swap(s.0, s.1);
                }
            }
            for (target, coeff) in [(&particle.best_code, cognitive), (&global, social)] {
                let keep = coeff * self.rng.gen::<f64>();
                for s in swap_sequence(x, target) {
                    if self.rng.gen::<f64>() < keep {
                        applied.push(s);
                        x.swap(s.0, s.1);
                    }
                }
            }
            if applied.len() > n {
                applied.drain(..applied.len() - n);
            }
            particle.velocity = applied;
            self.fitness[i] = self.instance.cost(x);
        }
        if self.algorithm.uses_two_opt() {
            self.polish_top_decile();
        }
        let Extras::Pso(particles) = &mut self.extras else { unreachable!() };
        for (i, particle) in particles.iter_mut().enumerate() {
            if self.fitness[i] < particle.best_fitness {
                particle.best_fitness = self.fitness[i];
                particle.best_code.clone_from(&self.population[i]);
            }
        }
    }
}

impl Engine for EngineState {
    fn step(&mut self, params: &HyperParams) -> Result<(), EngineError> {
        check_family(self.algorithm, params)?;
        match params.set {
            ParamSet::Ga { crossover_prob, mutation_prob } => {
                self.step_ga(crossover_prob, mutation_prob);
                if self.algorithm.uses_two_opt() {
                    self.polish_top_decile();
                }
            }
            ParamSet::Pso { inertia, cognitive, social } => self.step_pso(inertia, cognitive, social),
            ParamSet::Aco { pheromone_alpha, heuristic_beta, evaporation_rho } => {
                let Extras::Aco { pheromone } = &mut self.extras else { unreachable!("family checked") };
                let (population, fitness) = aco::iterate(
                    &self.instance,
                    pheromone,
                    self.population.len(),
                    pheromone_alpha,
                    heuristic_beta,
                    evaporation_rho,
                    &mut self.rng,
                );
                self.population = population;
                self.fitness = fitness;
            }
        }
        self.update_best();
        self.generation += 1;
        Ok(())
    }

    fn snapshot(&self) -> Result<EncodedPopulation, ElaError> {
        EncodedPopulation::new(self.population.clone(), FitnessSample::new(self.fitness.clone(), self.generation)?)
    }

    fn best(&self) -> &Solution {
        &self.best
    }

    fn generation(&self) -> u64 {
        self.generation
    }
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] < v[best] {
            best = i;
        }
    }
    best
}

fn argmax(v: &[f64]) -> usize {
    let mut worst = 0;
    for i in 1..v.len() {
        if v[i] > v[worst] {
            worst = i;
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{check_permutation, Payload, ProblemKind, Rounding};

    fn ring(n: usize) -> Arc<ProblemInstance> {
        let coords = (0..n)
            .map(|i| {
                let t = i as f64 * std::f64::consts::TAU / n as f64;
                (50.0 + 40.0 * t.cos(), 50.0 + 40.0 * t.sin())
            })
            .collect();
        Arc::new(ProblemInstance::new(ProblemKind::Tsp, "ring", Payload::Tour { coords, rounding: Rounding::Nearest }).unwrap())
    }

    fn params(family: Family, pop: usize) -> HyperParams {
        HyperParams::defaults(family).with_budget(pop, 50)
    }

    #[test]
    fn init_is_deterministic() {
        for algo in [Algorithm::Ga, Algorithm::Pso2Opt, Algorithm::Aco] {
            let p = params(algo.family(), 12);
            let a = EngineState::init(ring(10), algo, &p, 5).unwrap();
            let b = EngineState::init(ring(10), algo, &p, 5).unwrap();
            assert_eq!(a, b);
            assert_ne!(a, EngineState::init(ring(10), algo, &p, 6).unwrap());
        }
    }

    #[test]
    fn family_mismatch_rejected() {
        let p = params(Family::Pso, 4);
        assert!(matches!(
            EngineState::init(ring(6), Algorithm::Ga, &p, 0),
            Err(EngineError::FamilyMismatch { .. })
        ));
        let mut ga = EngineState::init(ring(6), Algorithm::Ga, &params(Family::Ga, 4), 0).unwrap();
        assert!(ga.step(&p).is_err());
    }

    #[test]
    fn single_individual_population() {
        for algo in [Algorithm::Ga2Opt, Algorithm::Pso, Algorithm::Aco] {
            let p = params(algo.family(), 1);
            let mut e = EngineState::init(ring(8), algo, &p, 1).unwrap();
            for _ in 0..3 {
                e.step(&p).unwrap();
            }
            assert_eq!(e.population().len(), 1);
        }
    }

    #[test]
    fn no_op_ga_operators_copy_parents() {
        let mut p = params(Family::Ga, 20);
        p.set("crossover_prob", 0.0).unwrap();
        p.set("mutation_prob", 0.0).unwrap();
        let mut e = EngineState::init(ring(12), Algorithm::Ga, &p, 3).unwrap();
        let before: std::collections::BTreeSet<Vec<usize>> = e.population().iter().cloned().collect();
        let best = e.best().clone();
        e.step(&p).unwrap();
        assert!(e.population().iter().all(|c| before.contains(c)));
        assert_eq!(e.best(), &best);
    }

    #[test]
    fn invariants_hold_over_a_run() {
        for algo in [Algorithm::Ga, Algorithm::Ga2Opt, Algorithm::Pso, Algorithm::Pso2Opt, Algorithm::Aco] {
            let p = params(algo.family(), 16);
            let inst = ring(15);
            let mut e = EngineState::init(inst.clone(), algo, &p, 11).unwrap();
            let mut last = e.best_fitness();
            for _ in 0..15 {
                e.step(&p).unwrap();
                assert!(e.best_fitness() <= last, "{algo}: best went up");
                last = e.best_fitness();
                for (code, f) in e.population().iter().zip(e.fitness()) {
                    check_permutation(code, 15).unwrap();
                    assert_eq!(inst.cost(code), *f);
                }
                let min = e.fitness().iter().copied().fold(f64::INFINITY, f64::min);
                assert!(e.best_fitness() <= min);
                if let Some(ph) = e.pheromone() {
                    assert!(ph.iter().all(|t| *t > 0.0));
                }
            }
        }
    }

    #[test]
    fn snapshot_is_pure_and_consistent() {
        let p = params(Family::Ga, 10);
        let inst = ring(9);
        let mut e = EngineState::init(inst.clone(), Algorithm::Ga2Opt, &p, 2).unwrap();
        assert_eq!(e.snapshot().unwrap(), e.snapshot().unwrap());
        let copy = e.clone();
        let _ = e.snapshot().unwrap();
        assert_eq!(copy, e);
        e.step(&p).unwrap();
        let snap = e.snapshot().unwrap();
        assert_eq!(snap.len(), 10);
        assert_eq!(snap.fitness().generation(), 1);
        for (code, f) in snap.solutions().iter().zip(snap.fitness().values()) {
            assert_eq!(inst.evaluate(code).unwrap(), *f);
        }
    }

    #[test]
    fn reapplying_same_params_changes_nothing() {
        let p = params(Family::Aco, 8);
        let mut a = EngineState::init(ring(10), Algorithm::Aco, &p, 4).unwrap();
        let mut b = a.clone();
        for _ in 0..5 {
            a.step(&p).unwrap();
            let swapped = p;
            b.step(&swapped).unwrap();
        }
        assert_eq!(a, b);
    }
}
