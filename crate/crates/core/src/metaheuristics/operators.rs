//! Permutation operators shared by the engines.

use rand::Rng;

use super::EngineError;
use crate::problems::ProblemInstance;

/// Order crossover (OX).
///
/// The child keeps `p1[lo..hi)`; the remaining positions, starting at `hi`
/// and wrapping, are filled with `p2`'s elements in `p2` order starting at
/// `hi`, skipping those already present.
pub fn order_crossover(p1: &[usize], p2: &[usize], lo: usize, hi: usize) -> Result<Vec<usize>, EngineError> {
    let n = p1.len();
    if p2.len() != n || lo >= hi || hi > n {
        return Err(EngineError::BadCut { lo, hi, len: n });
    }
    let mut child = vec![usize::MAX; n];
    let mut taken = vec![false; n];
    for i in lo..hi {
        child[i] = p1[i];
        taken[p1[i]] = true;
    }
    let mut write = hi % n;
    for k in 0..n {
        let gene = p2[(hi + k) % n];
        if !taken[gene] {
            taken[gene] = true;
            child[write] = gene;
            write = (write + 1) % n;
        }
    }
    Ok(child)
}

/// OX with uniformly drawn cut points.
pub fn random_order_crossover<R: Rng>(p1: &[usize], p2: &[usize], rng: &mut R) -> Vec<usize> {
    let n = p1.len();
    if n < 2 {
        return p1.to_vec();
    }
    let a = rng.gen_range(0..n);
    let b = rng.gen_range(0..n);
    let (lo, hi) = if a <= b { (a, b + 1) } else { (b, a + 1) };
    order_crossover(p1, p2, lo, hi).expect("cut points drawn in range")
}

/// Exchanges two distinct random positions.
pub fn swap_mutation<R: Rng>(code: &mut [usize], rng: &mut R) {
    let n = code.len();
    if n < 2 {
        return;
    }
    let i = rng.gen_range(0..n);
    let mut j = rng.gen_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    code.swap(i, j);
}

/// Index of the best of `size` uniformly drawn members (with replacement).
pub fn tournament<R: Rng>(fitness: &[f64], size: usize, rng: &mut R) -> usize {
    let mut best = rng.gen_range(0..fitness.len());
    for _ in 1..size {
        let c = rng.gen_range(0..fitness.len());
        if fitness[c] < fitness[best] {
            best = c;
        }
    }
    best
}

/// Transpositions that turn `from` into `to`, applied left to right.
pub fn swap_sequence(from: &[usize], to: &[usize]) -> Vec<(usize, usize)> {
    let mut cur = from.to_vec();
    let mut pos = vec![0; cur.len()];
    for (i, &v) in cur.iter().enumerate() {
        pos[v] = i;
    }
    let mut swaps = Vec::new();
    for i in 0..cur.len() {
        if cur[i] != to[i] {
            let j = pos[to[i]];
            pos[cur[i]] = j;
            pos[cur[j]] = i;
            cur.swap(i, j);
            swaps.push((i, j));
        }
    }
    swaps
}

pub fn apply_swaps(code: &mut [usize], swaps: &[(usize, usize)]) {
    for &(i, j) in swaps {
        code.swap(i, j);
    }
}

/// One first-improvement 2-opt pass: every segment reversal is tried once,
/// improving moves are applied as soon as they are found. Returns the new
/// fitness, never larger than `fitness`.
pub fn two_opt_pass(instance: &ProblemInstance, code: &mut [usize], fitness: f64) -> f64 {
    let n = code.len();
    if n < 4 {
        return fitness;
    }
    if instance.is_closed_tour() {
        let d = |a: usize, b: usize| instance.edge(a, b).expect("tour instances have edges");
        let mut delta_total = 0.0;
        for i in 0..n - 1 {
            for j in i + 2..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                let (a, b) = (code[i], code[i + 1]);
                let (c, e) = (code[j], code[(j + 1) % n]);
                let delta = d(a, c) + d(b, e) - d(a, b) - d(c, e);
                if delta < -1e-9 {
                    code[i + 1..=j].reverse();
                    delta_total += delta;
                }
            }
        }
        if delta_total < 0.0 {
            instance.cost(code)
        } else {
            fitness
        }
    } else {
        let mut best = fitness;
        for i in 0..n - 1 {
            for j in i + 1..n {
                code[i..=j].reverse();
                let f = instance.cost(code);
                if f < best - 1e-9 {
                    best = f;
                } else {
                    code[i..=j].reverse();
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{check_permutation, Payload, ProblemKind, Rounding};
    use crate::rng::{stream_rng, Stream};
    use proptest::prelude::*;

    #[test]
    fn ox_examples() {
        let p = [0, 1, 2, 3, 4];
        assert_eq!(order_crossover(&p, &p, 1, 3).unwrap(), p.to_vec());
        assert_eq!(order_crossover(&[1, 2, 3, 4, 5].map(|v| v - 1), &[5, 4, 3, 2, 1].map(|v| v - 1), 1, 4).unwrap(),
            [5, 2, 3, 4, 1].map(|v| v - 1).to_vec());
        assert!(order_crossover(&p, &p, 3, 3).is_err());
        assert!(order_crossover(&p, &p, 2, 6).is_err());
    }

    #[test]
    fn swap_sequence_reaches_target() {
        let from = [3, 0, 4, 1, 2];
        let to = [0, 1, 2, 3, 4];
        let mut x = from;
        apply_swaps(&mut x, &swap_sequence(&from, &to));
        assert_eq!(x, to);
        assert!(swap_sequence(&to, &to).is_empty());
    }

    fn square() -> ProblemInstance {
        let coords = vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
        ProblemInstance::new(ProblemKind::Tsp, "sq", Payload::Tour { coords, rounding: Rounding::Exact }).unwrap()
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for k in 0..=p.len() {
                let mut q = p.clone();
                q.insert(k, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn two_opt_uncrosses_the_square() {
        let sq = square();
        let optimum = permutations(4).iter().map(|p| sq.cost(p)).fold(f64::INFINITY, f64::min);
        assert_eq!(optimum, 4.0);
        let mut code = vec![0, 2, 1, 3];
        let before = sq.cost(&code);
        assert!((before - (2.0 + 2.0 * 2f64.sqrt())).abs() < 1e-12);
        let after = two_opt_pass(&sq, &mut code, before);
        assert_eq!(after, optimum);
        assert_eq!(sq.cost(&code), after);
    }

    #[test]
    fn two_opt_on_flow_shop_never_worsens() {
        let times = vec![vec![5, 1, 3], vec![2, 6, 1], vec![4, 4, 4], vec![1, 2, 7], vec![3, 3, 1]];
        let inst = ProblemInstance::new(ProblemKind::Fssp, "f", Payload::FlowShop { times, header: None }).unwrap();
        let mut code = vec![4, 3, 2, 1, 0];
        let before = inst.cost(&code);
        let after = two_opt_pass(&inst, &mut code, before);
        assert!(after <= before);
        assert_eq!(inst.cost(&code), after);
    }

    proptest! {
        #[test]
        fn ox_child_is_permutation(seed in any::<u64>(), n in 2usize..40) {
            let mut rng = stream_rng(seed, Stream::Fuzz);
            let mut p1: Vec<usize> = (0..n).collect();
            let mut p2: Vec<usize> = (0..n).collect();
            use rand::seq::SliceRandom;
            p1.shuffle(&mut rng);
            p2.shuffle(&mut rng);
            let child = random_order_crossover(&p1, &p2, &mut rng);
            prop_assert!(check_permutation(&child, n).is_ok());
        }
    }
}
