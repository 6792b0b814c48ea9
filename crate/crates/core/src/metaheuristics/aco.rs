use rand::Rng;

use crate::problems::ProblemInstance;
use crate::rng::EngineRng;

/// Lower bound on every pheromone entry, keeps trails strictly positive.
pub const PHEROMONE_FLOOR: f64 = 1e-12;
const MIN_EDGE: f64 = 1e-9;

/// Probability of moving to each candidate, proportional to
/// `pheromone^alpha · heuristic^beta`. Falls back to uniform when every
/// weight underflows.
pub fn transition_probabilities(pheromone: &[f64], heuristic: &[f64], alpha: f64, beta: f64) -> Vec<f64> {
    let w: Vec<f64> = pheromone.iter().zip(heuristic).map(|(t, h)| t.powf(alpha) * h.powf(beta)).collect();
    let total: f64 = w.iter().sum();
    if total > 0.0 && total.is_finite() {
        w.iter().map(|v| v / total).collect()
    } else {
        vec![1.0 / w.len() as f64; w.len()]
    }
}

/// Desirability `η = 1/d` between coded elements; 1 when the problem has no
/// edge weights (flow shop).
fn heuristic(instance: &ProblemInstance, a: usize, b: usize) -> f64 {
    instance.edge(a, b).map_or(1.0, |d| 1.0 / d.max(MIN_EDGE))
}

/// One ACO iteration: construct `ants` solutions, evaporate, deposit on the
/// iteration best. Returns the constructed population and its fitness.
pub(super) fn iterate(
    instance: &ProblemInstance,
    pheromone: &mut [f64],
    ants: usize,
    alpha: f64,
    beta: f64,
    rho: f64,
    rng: &mut EngineRng,
) -> (Vec<Vec<usize>>, Vec<f64>) {
    let n = instance.dimension();
    let mut weights = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            if a != b {
                weights[a * n + b] = pheromone[a * n + b].powf(alpha) * heuristic(instance, a, b).powf(beta);
            }
        }
    }

    let mut population = Vec::with_capacity(ants);
    let mut fitness = Vec::with_capacity(ants);
    let mut candidates: Vec<usize> = Vec::with_capacity(n);
    for _ in 0..ants {
        let mut tour = Vec::with_capacity(n);
        let mut visited = vec![false; n];
        let mut current = rng.gen_range(0..n);
        tour.push(current);
        visited[current] = true;
        while tour.len() < n {
            candidates.clear();
            candidates.extend((0..n).filter(|&c| !visited[c]));
            let row = &weights[current * n..(current + 1) * n];
            let total: f64 = candidates.iter().map(|&c| row[c]).sum();
            let next = if total > 0.0 && total.is_finite() {
                let mut target = rng.gen::<f64>() * total;
                let mut pick = *candidates.last().expect("unvisited remain");
                for &c in &candidates {
                    target -= row[c];
                    if target <= 0.0 {
                        pick = c;
                        break;
                    }
                }
                pick
            } else {
                candidates[rng.gen_range(0..candidates.len())]
            };
            visited[next] = true;
            tour.push(next);
            current = next;
        }
        fitness.push(instance.cost(&tour));
        population.push(tour);
    }

    for t in pheromone.iter_mut() {
        *t = (*t * (1.0 - rho)).max(PHEROMONE_FLOOR);
    }
    let best = (0..ants).min_by(|&a, &b| fitness[a].total_cmp(&fitness[b])).expect("at least one ant");
    let deposit = 1.0 / fitness[best].max(MIN_EDGE);
    let tour = &population[best];
    for k in 0..n {
        let (a, b) = (tour[k], tour[(k + 1) % n]);
        pheromone[a * n + b] += deposit;
        pheromone[b * n + a] += deposit;
    }
    (population, fitness)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roulette_is_proportional_to_pheromone() {
        let p = transition_probabilities(&[2.0, 1.0], &[1.0, 1.0], 1.0, 0.0);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn heuristic_exponent_applies() {
        // η = [1, 0.5], β = 2 → weights [1, 0.25]
        let p = transition_probabilities(&[1.0, 1.0], &[1.0, 0.5], 1.0, 2.0);
        assert!((p[0] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn underflow_falls_back_to_uniform() {
        let p = transition_probabilities(&[1e-300, 1e-300], &[1.0, 1.0], 10.0, 1.0);
        assert_eq!(p, vec![0.5, 0.5]);
    }
}
