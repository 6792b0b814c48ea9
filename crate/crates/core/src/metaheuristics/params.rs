use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Engine families exposed by the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Ga,
    Ga2Opt,
    Pso,
    Pso2Opt,
    Aco,
}

impl Algorithm {
    pub fn family(self) -> Family {
        match self {
            Algorithm::Ga | Algorithm::Ga2Opt => Family::Ga,
            Algorithm::Pso | Algorithm::Pso2Opt => Family::Pso,
            Algorithm::Aco => Family::Aco,
        }
    }

    pub fn uses_two_opt(self) -> bool {
        matches!(self, Algorithm::Ga2Opt | Algorithm::Pso2Opt)
    }

    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Ga => "ga",
            Algorithm::Ga2Opt => "ga-2opt",
            Algorithm::Pso => "pso",
            Algorithm::Pso2Opt => "pso-2opt",
            Algorithm::Aco => "aco",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "ga" => Ok(Algorithm::Ga),
            "ga-2opt" | "ga2opt" => Ok(Algorithm::Ga2Opt),
            "pso" => Ok(Algorithm::Pso),
            "pso-2opt" | "pso2opt" => Ok(Algorithm::Pso2Opt),
            "aco" => Ok(Algorithm::Aco),
            other => Err(format!("unknown algorithm {other:?} (expected ga, ga-2opt, pso, pso-2opt, aco)")),
        }
    }
}

/// Parameter family tag shared by the algorithm variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "GA")]
    Ga,
    #[serde(rename = "PSO")]
    Pso,
    #[serde(rename = "ACO")]
    Aco,
}

impl Family {
    /// Tunable parameter names in canonical order.
    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            Family::Ga => &["crossover_prob", "mutation_prob"],
            Family::Pso => &["inertia", "cognitive", "social"],
            Family::Aco => &["pheromone_alpha", "heuristic_beta", "evaporation_rho"],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Family::Ga => "GA",
            Family::Pso => "PSO",
            Family::Aco => "ACO",
        }
    }
}

/// Closed interval a tunable parameter is clamped to.
pub fn bounds(name: &str) -> Option<(f64, f64)> {
    match name {
        "crossover_prob" | "mutation_prob" | "inertia" => Some((0.0, 1.0)),
        "cognitive" | "social" => Some((0.0, 4.0)),
        "pheromone_alpha" | "heuristic_beta" => Some((0.1, 10.0)),
        // The open interval (0, 1) is closed to [0.01, 0.99].
        "evaporation_rho" => Some((0.01, 0.99)),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum ParamSet {
    #[serde(rename = "GA")]
    Ga { crossover_prob: f64, mutation_prob: f64 },
    #[serde(rename = "PSO")]
    Pso { inertia: f64, cognitive: f64, social: f64 },
    #[serde(rename = "ACO")]
    Aco { pheromone_alpha: f64, heuristic_beta: f64, evaporation_rho: f64 },
}

/// A value that had to be moved into its bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clamp {
    pub param: String,
    pub requested: f64,
    pub applied: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    #[serde(flatten)]
    pub set: ParamSet,
    pub population_size: usize,
    pub max_iterations: usize,
}

pub const DEFAULT_POPULATION: usize = 500;
pub const DEFAULT_ITERATIONS: usize = 500;

impl HyperParams {
    /// Initial values: crossover 0.6, mutation 0.1; inertia 0.3, cognitive and
    /// social 1.5; alpha 2, beta 2, rho 0.3; population and iterations 500.
    pub fn defaults(family: Family) -> Self {
        let set = match family {
            Family::Ga => ParamSet::Ga { crossover_prob: 0.6, mutation_prob: 0.1 },
            Family::Pso => ParamSet::Pso { inertia: 0.3, cognitive: 1.5, social: 1.5 },
            Family::Aco => ParamSet::Aco { pheromone_alpha: 2.0, heuristic_beta: 2.0, evaporation_rho: 0.3 },
        };
        Self { set, population_size: DEFAULT_POPULATION, max_iterations: DEFAULT_ITERATIONS }
    }

    pub fn with_budget(mut self, population_size: usize, max_iterations: usize) -> Self {
        self.population_size = population_size.max(1);
        self.max_iterations = max_iterations.max(1);
        self
    }

    pub fn family(&self) -> Family {
        match self.set {
            ParamSet::Ga { .. } => Family::Ga,
            ParamSet::Pso { .. } => Family::Pso,
            ParamSet::Aco { .. } => Family::Aco,
        }
    }

    pub fn names(&self) -> &'static [&'static str] {
        self.family().param_names()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        match (&self.set, name) {
            (ParamSet::Ga { crossover_prob, .. }, "crossover_prob") => Some(*crossover_prob),
            (ParamSet::Ga { mutation_prob, .. }, "mutation_prob") => Some(*mutation_prob),
            (ParamSet::Pso { inertia, .. }, "inertia") => Some(*inertia),
            (ParamSet::Pso { cognitive, .. }, "cognitive") => Some(*cognitive),
            (ParamSet::Pso { social, .. }, "social") => Some(*social),
            (ParamSet::Aco { pheromone_alpha, .. }, "pheromone_alpha") => Some(*pheromone_alpha),
            (ParamSet::Aco { heuristic_beta, .. }, "heuristic_beta") => Some(*heuristic_beta),
            (ParamSet::Aco { evaporation_rho, .. }, "evaporation_rho") => Some(*evaporation_rho),
            _ => None,
        }
    }

    fn slot(&mut self, name: &str) -> Option<&mut f64> {
        match (&mut self.set, name) {
            (ParamSet::Ga { crossover_prob, .. }, "crossover_prob") => Some(crossover_prob),
            (ParamSet::Ga { mutation_prob, .. }, "mutation_prob") => Some(mutation_prob),
            (ParamSet::Pso { inertia, .. }, "inertia") => Some(inertia),
            (ParamSet::Pso { cognitive, .. }, "cognitive") => Some(cognitive),
            (ParamSet::Pso { social, .. }, "social") => Some(social),
            (ParamSet::Aco { pheromone_alpha, .. }, "pheromone_alpha") => Some(pheromone_alpha),
            (ParamSet::Aco { heuristic_beta, .. }, "heuristic_beta") => Some(heuristic_beta),
            (ParamSet::Aco { evaporation_rho, .. }, "evaporation_rho") => Some(evaporation_rho),
            _ => None,
        }
    }

    /// Sets a tunable parameter, clamping it into bounds. Non-finite values
    /// leave the current value in place. Returns the clamp, if any, or
    /// `Err` for a name this family does not have.
    pub fn set(&mut self, name: &str, value: f64) -> Result<Option<Clamp>, String> {
        let (lo, hi) = bounds(name).ok_or_else(|| format!("unknown parameter {name:?}"))?;
        let family = self.family();
        let slot = self.slot(name).ok_or_else(|| format!("{name} is not a {} parameter", family.label()))?;
        let applied = if value.is_nan() {
            *slot
        } else {
            value.clamp(lo, hi)
        };
        *slot = applied;
        if applied != value {
            log::info!("clamped {name}: requested {value}, applied {applied}");
            Ok(Some(Clamp { param: name.to_string(), requested: value, applied }))
        } else {
            Ok(None)
        }
    }

    /// Forces every tunable parameter into bounds.
    pub fn clamp_all(&mut self) -> Vec<Clamp> {
        let mut clamps = Vec::new();
        for name in self.names() {
            let v = self.get(name).expect("own parameter");
            if let Ok(Some(c)) = self.set(name, v) {
                clamps.push(c);
            }
        }
        self.population_size = self.population_size.max(1);
        self.max_iterations = self.max_iterations.max(1);
        clamps
    }

    pub fn within_bounds(&self) -> bool {
        self.names().iter().all(|n| {
            let v = self.get(n).expect("own parameter");
            let (lo, hi) = bounds(n).expect("known parameter");
            v.is_finite() && v >= lo && v <= hi
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_table() {
        let ga = HyperParams::defaults(Family::Ga);
        assert_eq!((ga.population_size, ga.max_iterations), (500, 500));
        assert_eq!(ga.get("crossover_prob"), Some(0.6));
        assert_eq!(ga.get("mutation_prob"), Some(0.1));
        let pso = HyperParams::defaults(Family::Pso);
        assert_eq!(pso.get("inertia"), Some(0.3));
        assert_eq!(pso.get("cognitive"), Some(1.5));
        assert_eq!(pso.get("social"), Some(1.5));
        let aco = HyperParams::defaults(Family::Aco);
        assert_eq!(aco.get("pheromone_alpha"), Some(2.0));
        assert_eq!(aco.get("heuristic_beta"), Some(2.0));
        assert_eq!(aco.get("evaporation_rho"), Some(0.3));
    }

    #[test]
    fn set_clamps_and_reports() {
        let mut p = HyperParams::defaults(Family::Ga);
        let c = p.set("mutation_prob", 1.5).unwrap().unwrap();
        assert_eq!(c.applied, 1.0);
        assert_eq!(p.get("mutation_prob"), Some(1.0));
        assert_eq!(p.set("mutation_prob", f64::NEG_INFINITY).unwrap().unwrap().applied, 0.0);
        assert!(p.set("mutation_prob", f64::NAN).unwrap().is_some());
        assert_eq!(p.get("mutation_prob"), Some(0.0));
        assert!(p.set("inertia", 0.5).is_err());
        assert!(p.set("bogus", 0.5).is_err());
        assert!(p.within_bounds());
    }

    #[test]
    fn json_shape_is_flat() {
        let v = serde_json::to_value(HyperParams::defaults(Family::Aco)).unwrap();
        assert_eq!(v["family"], "ACO");
        assert_eq!(v["evaporation_rho"], 0.3);
        assert_eq!(v["population_size"], 500);
        let back: HyperParams = serde_json::from_value(v).unwrap();
        assert_eq!(back, HyperParams::defaults(Family::Aco));
    }

    #[test]
    fn algorithm_names_parse() {
        for a in [Algorithm::Ga, Algorithm::Ga2Opt, Algorithm::Pso, Algorithm::Pso2Opt, Algorithm::Aco] {
            assert_eq!(a.label().parse::<Algorithm>().unwrap(), a);
        }
        assert!("sa".parse::<Algorithm>().is_err());
    }
}
