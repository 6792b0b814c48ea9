//! The deterministic rule backend.
//!
//! Every function here is pure: identical inputs give identical outputs.

use super::{Axis, ControlEntry, ControlMap, Directive, EffectAxis, Strength};
use crate::ela::{DegeneracyFlag, ElaFeatures};
use crate::experience::ExperienceRecord;
use crate::metaheuristics::{bounds, Clamp, Family, HyperParams};

pub const R2_EXPLOIT: f64 = 0.7;
pub const R2_EXPLORE: f64 = 0.3;
pub const DISPERSION_EXPLOIT: f64 = 0.2;
pub const DISPERSION_EXPLORE: f64 = 0.8;
pub const SMALL_STEP: f64 = 0.05;
pub const LARGE_STEP: f64 = 0.20;

pub fn canonical_map(family: Family) -> ControlMap {
    use EffectAxis::*;
    let entries: &[(&str, EffectAxis, &str)] = match family {
        Family::Ga => &[
            ("crossover_prob", BoostsExploitation, "recombines elite building blocks"),
            ("mutation_prob", BoostsExploration, "random swaps diversify the population"),
        ],
        Family::Pso => &[
            ("inertia", BoostsExploration, "keeps particles moving along old directions"),
            ("cognitive", BoostsExploration, "pulls toward scattered personal bests"),
            ("social", BoostsExploitation, "pulls every particle toward the global best"),
        ],
        Family::Aco => &[
            ("pheromone_alpha", BoostsExploitation, "ants follow reinforced trails"),
            ("heuristic_beta", BoostsExploration, "greedy desirability outweighs learned trails"),
            ("evaporation_rho", BoostsExploration, "old trails are forgotten faster"),
        ],
    };
    ControlMap {
        entries: entries
            .iter()
            .map(|&(p, e, n)| ControlEntry { param: p.to_string(), effect: e, note: n.to_string() })
            .collect(),
    }
}

/// One vote per feature in vector order; `None` abstains.
pub fn votes(f: &ElaFeatures) -> [Option<Axis>; 5] {
    use Axis::{IncreaseExploitation as Exploit, IncreaseExploration as Explore};
    let sign = |v: f64, pos: Axis, neg: Axis| {
        if v > 0.0 {
            Some(pos)
        } else if v < 0.0 {
            Some(neg)
        } else {
            None
        }
    };
    let zero_var = f.has(DegeneracyFlag::ZeroVariance);
    let s = if zero_var { None } else { sign(f.skewness, Exploit, Explore) };
    let k = if zero_var { None } else { sign(f.kurtosis, Explore, Exploit) };
    let r2 = if f.has(DegeneracyFlag::FlatLandscape) {
        None
    } else if f.r_squared >= R2_EXPLOIT {
        Some(Exploit)
    } else if f.r_squared <= R2_EXPLORE {
        Some(Explore)
    } else {
        None
    };
    let d = if f.has(DegeneracyFlag::EmptyQuantile) {
        None
    } else if f.dispersion_ratio < DISPERSION_EXPLOIT {
        Some(Exploit)
    } else if f.dispersion_ratio >= DISPERSION_EXPLORE {
        Some(Explore)
    } else {
        None
    };
    let v = if f.has(DegeneracyFlag::ShortHistory) {
        None
    } else if f.variability > 1.0 {
        Some(Exploit)
    } else {
        Some(Explore)
    };
    [s, k, r2, d, v]
}

/// Majority vote over non-abstaining signals; a tie (including no votes)
/// holds. Unanimity makes the directive Large.
pub fn analyst_rule(f: &ElaFeatures) -> Directive {
    let votes = votes(f);
    let explore = votes.iter().filter(|v| **v == Some(Axis::IncreaseExploration)).count();
    let exploit = votes.iter().filter(|v| **v == Some(Axis::IncreaseExploitation)).count();
    let axis = match explore.cmp(&exploit) {
        std::cmp::Ordering::Greater => Axis::IncreaseExploration,
        std::cmp::Ordering::Less => Axis::IncreaseExploitation,
        std::cmp::Ordering::Equal => Axis::Hold,
    };
    let strength = if explore == 0 || exploit == 0 { Strength::Large } else { Strength::Small };
    Directive::new(
        axis,
        strength,
        format!("votes: explore {explore}, exploit {exploit}, abstain {}", 5 - explore - exploit),
    )
}

/// Directive from outcomes alone, used when features are withheld: keep
/// exploiting after an improvement, otherwise explore.
pub fn history_rule(recent: &[&ExperienceRecord]) -> Directive {
    match recent.iter().max_by_key(|r| r.generation) {
        None => Directive::new(Axis::Hold, Strength::Small, "no history"),
        Some(r) if r.outcome_delta > 0.0 => {
            Directive::new(Axis::IncreaseExploitation, Strength::Small, "last decision improved the best")
        }
        Some(_) => Directive::new(Axis::IncreaseExploration, Strength::Small, "last decision did not improve the best"),
    }
}

pub fn step_fraction(strength: Strength) -> f64 {
    match strength {
        Strength::Small => SMALL_STEP,
        Strength::Large => LARGE_STEP,
    }
}

/// Moves parameters whose effect matches the directive up by one step of
/// their range and the others down by half a step, then clamps.
pub fn actuator_rule(directive: &Directive, map: &ControlMap, current: &HyperParams) -> (HyperParams, Vec<Clamp>) {
    let mut next = *current;
    let target = match directive.axis {
        Axis::Hold => return (next, Vec::new()),
        Axis::IncreaseExploration => EffectAxis::BoostsExploration,
        Axis::IncreaseExploitation => EffectAxis::BoostsExploitation,
    };
    let frac = step_fraction(directive.strength);
    let mut clamps = Vec::new();
    for name in current.names() {
        let Some(effect) = map.effect(name) else { continue };
        let (lo, hi) = bounds(name).expect("known parameter");
        let step = frac * (hi - lo);
        let delta = if effect == target { step } else { -step / 2.0 };
        let value = current.get(name).expect("own parameter") + delta;
        if let Ok(Some(c)) = next.set(name, value) {
            clamps.push(c);
        }
    }
    (next, clamps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn features(s: f64, k: f64, r2: f64, d: f64, v: f64, flags: &[DegeneracyFlag]) -> ElaFeatures {
        ElaFeatures {
            skewness: s,
            kurtosis: k,
            r_squared: r2,
            dispersion_ratio: d,
            variability: v,
            degenerate_flags: flags.iter().copied().collect::<BTreeSet<_>>(),
        }
    }

    #[test]
    fn all_explore_is_large() {
        let d = analyst_rule(&features(-0.5, 1.2, 0.1, 0.9, 0.8, &[]));
        assert_eq!((d.axis, d.strength), (Axis::IncreaseExploration, Strength::Large));
    }

    #[test]
    fn all_flagged_holds() {
        use DegeneracyFlag::*;
        let d = analyst_rule(&features(0.0, 0.0, 0.0, 1.0, 1.0, &[ZeroVariance, FlatLandscape, EmptyQuantile, ShortHistory]));
        assert_eq!((d.axis, d.strength), (Axis::Hold, Strength::Small));
    }

    #[test]
    fn three_to_two_is_small() {
        // S, R², V exploit; K, D explore.
        let d = analyst_rule(&features(0.4, 0.5, 0.9, 0.85, 1.1, &[]));
        assert_eq!((d.axis, d.strength), (Axis::IncreaseExploitation, Strength::Small));
    }

    #[test]
    fn middle_band_abstains() {
        let v = votes(&features(0.0, 0.0, 0.5, 0.5, 1.0, &[]));
        assert_eq!(v, [None, None, None, None, Some(Axis::IncreaseExploration)]);
        let d = analyst_rule(&features(0.0, 0.0, 0.5, 0.5, 1.0, &[]));
        assert_eq!((d.axis, d.strength), (Axis::IncreaseExploration, Strength::Large));
    }

    #[test]
    fn canonical_maps_are_complete() {
        for family in [Family::Ga, Family::Pso, Family::Aco] {
            canonical_map(family).validate(family).unwrap();
        }
        let ga = canonical_map(Family::Ga);
        assert_eq!(ga.effect("mutation_prob"), Some(EffectAxis::BoostsExploration));
        assert_eq!(ga.effect("crossover_prob"), Some(EffectAxis::BoostsExploitation));
    }

    #[test]
    fn step_rule_arithmetic() {
        let map = canonical_map(Family::Ga);
        let cur = HyperParams::defaults(Family::Ga);
        let (hold, _) = actuator_rule(&Directive::new(Axis::Hold, Strength::Large, ""), &map, &cur);
        assert_eq!(hold, cur);
        let (next, clamps) = actuator_rule(&Directive::new(Axis::IncreaseExploration, Strength::Small, ""), &map, &cur);
        assert!(clamps.is_empty());
        // crossover 0.6 − 0.05·1/2, mutation 0.1 + 0.05·1
        assert!((next.get("crossover_prob").unwrap() - 0.575).abs() < 1e-12);
        assert!((next.get("mutation_prob").unwrap() - 0.15).abs() < 1e-12);
        let (next, _) = actuator_rule(&Directive::new(Axis::IncreaseExploitation, Strength::Large, ""), &map, &cur);
        assert!((next.get("crossover_prob").unwrap() - 0.8).abs() < 1e-12);
        assert!((next.get("mutation_prob").unwrap() - 0.0).abs() < 1e-12);
    }

    #[test]
    fn step_rule_clamps() {
        let map = canonical_map(Family::Aco);
        let mut cur = HyperParams::defaults(Family::Aco);
        cur.set("evaporation_rho", 0.95).unwrap();
        let (next, clamps) = actuator_rule(&Directive::new(Axis::IncreaseExploration, Strength::Large, ""), &map, &cur);
        assert_eq!(next.get("evaporation_rho"), Some(0.99));
        assert_eq!(clamps.len(), 1);
        assert!(next.within_bounds());
    }

    #[test]
    fn history_rule_follows_last_outcome() {
        assert_eq!(history_rule(&[]).axis, Axis::Hold);
        let mut r = crate::experience::tests::record(3, [0.0; 5]);
        r.outcome_delta = 1.0;
        assert_eq!(history_rule(&[&r]).axis, Axis::IncreaseExploitation);
        r.outcome_delta = 0.0;
        assert_eq!(history_rule(&[&r]).axis, Axis::IncreaseExploration);
    }
}
