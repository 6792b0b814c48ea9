//! The three-stage reasoning chain.
//!
//! The Strategist maps each tunable parameter to the search axis it mainly
//! pushes (once per run), the Analyst reads landscape features and emits a
//! [`Directive`], and the Actuator turns the directive into new parameter
//! values. Each stage runs against a [`Backend`]: the deterministic rule
//! tables in [`rules`] or a chat model. Model answers that fail validation
//! get one retry; after that the rule result is substituted and the raw
//! answer logged, so runs always complete.

pub mod parse;
pub mod prompts;
pub mod rules;

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ela::ElaFeatures;
use crate::experience::ExperienceRecord;
use crate::llm::ChatBackend;
use crate::metaheuristics::{Clamp, Family, HyperParams};
pub use parse::{parse_agent_response, parse_agent_response_bytes, AgentResponse, ResponseError, SchemaViolation};
pub use prompts::{render, PromptBundle, PromptContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    IncreaseExploration,
    IncreaseExploitation,
    Hold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strength {
    Small,
    Large,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "RawDirective")]
pub struct Directive {
    pub axis: Axis,
    pub strength: Strength,
    pub rationale: String,
}

#[derive(Deserialize)]
struct RawDirective {
    axis: Axis,
    strength: Strength,
    #[serde(default)]
    rationale: String,
}

impl From<RawDirective> for Directive {
    fn from(r: RawDirective) -> Self {
        Directive::new(r.axis, r.strength, r.rationale)
    }
}

impl Directive {
    /// A `Hold` directive is always `Small`.
    pub fn new(axis: Axis, strength: Strength, rationale: impl Into<String>) -> Self {
        let strength = if axis == Axis::Hold { Strength::Small } else { strength };
        Self { axis, strength, rationale: rationale.into() }
    }

    pub fn hold() -> Self {
        Self::new(Axis::Hold, Strength::Small, "")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EffectAxis {
    BoostsExploration,
    BoostsExploitation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlEntry {
    pub param: String,
    pub effect: EffectAxis,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlMap {
    pub entries: Vec<ControlEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ControlMapError {
    #[error("parameter {0} is not mapped")]
    Missing(String),
    #[error("parameter {0} is mapped more than once")]
    Duplicate(String),
    #[error("parameter {0} is not tunable for this algorithm")]
    Unknown(String),
}

impl ControlMap {
    pub fn effect(&self, param: &str) -> Option<EffectAxis> {
        self.entries.iter().find(|e| e.param == param).map(|e| e.effect)
    }

    /// Every tunable parameter of `family` appears exactly once and nothing else does.
    pub fn validate(&self, family: Family) -> Result<(), ControlMapError> {
        let names = family.param_names();
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            if !names.contains(&e.param.as_str()) {
                return Err(ControlMapError::Unknown(e.param.clone()));
            }
            if !seen.insert(e.param.as_str()) {
                return Err(ControlMapError::Duplicate(e.param.clone()));
            }
        }
        match names.iter().find(|n| !seen.contains(*n)) {
            Some(n) => Err(ControlMapError::Missing(n.to_string())),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Strategist,
    Analyst,
    Actuator,
    /// Single call standing in for the whole chain.
    Merged,
}

#[derive(Clone)]
pub enum Backend {
    Rule,
    Llm(Arc<dyn ChatBackend>),
}

impl fmt::Debug for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Backend::Rule => f.write_str("Rule"),
            Backend::Llm(_) => f.write_str("Llm"),
        }
    }
}

impl Backend {
    pub fn label(&self) -> &'static str {
        match self {
            Backend::Rule => "rule",
            Backend::Llm(_) => "llm",
        }
    }
}

/// An agent's answer plus how it was obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentReply<T> {
    pub value: T,
    /// Why the rule result was substituted, if it was.
    pub fallback: Option<String>,
    /// Raw model answers, one per attempt.
    pub raw: Vec<String>,
    /// Time spent waiting on the backend.
    pub latency_ms: u64,
    pub clamps: Vec<Clamp>,
}

impl<T> AgentReply<T> {
    fn rule(value: T) -> Self {
        Self { value, fallback: None, raw: Vec::new(), latency_ms: 0, clamps: Vec::new() }
    }
}

/// Total attempts per agent call: the first plus one retry.
pub const ATTEMPTS: usize = 2;

/// Asks the model up to [`ATTEMPTS`] times, returning the first answer that
/// `accept` takes, or the last error.
fn consult<T>(
    chat: &dyn ChatBackend,
    bundle: &PromptBundle,
    mut accept: impl FnMut(&str) -> Result<T, String>,
) -> (Result<T, String>, Vec<String>, u64) {
    let system = prompts::system_message(bundle.role);
    let started = Instant::now();
    let mut raw = Vec::new();
    let mut last = String::new();
    for attempt in 1..=ATTEMPTS {
        match chat.chat(system, &bundle.rendered_text) {
            Ok(text) => {
                let verdict = accept(&text);
                raw.push(text);
                match verdict {
                    Ok(v) => return (Ok(v), raw, started.elapsed().as_millis() as u64),
                    Err(e) => {
                        log::info!("{:?} answer rejected on attempt {attempt}: {e}", bundle.role);
                        last = e;
                    }
                }
            }
            Err(e) => {
                last = e.to_string();
                log::info!("{:?} call failed on attempt {attempt}: {last}", bundle.role);
            }
        }
    }
    (Err(last), raw, started.elapsed().as_millis() as u64)
}

fn substitute<T>(role: Role, value: T, reason: String, raw: Vec<String>, latency_ms: u64) -> AgentReply<T> {
    log::warn!("{role:?}: substituting rule result ({reason}); raw responses: {raw:?}");
    AgentReply { value, fallback: Some(reason), raw, latency_ms, clamps: Vec::new() }
}

fn sanitize_map(entries: Vec<parse::RawControlEntry>, family: Family) -> Result<ControlMap, String> {
    let names = family.param_names();
    let (known, unknown): (Vec<_>, Vec<_>) = entries.into_iter().partition(|e| names.contains(&e.param.as_str()));
    let mut map = ControlMap {
        entries: known
            .into_iter()
            .map(|e| ControlEntry { param: e.param, effect: e.effect, note: e.note })
            .collect(),
    };
    if !unknown.is_empty() {
        log::warn!(
            "Strategist named unknown parameters {:?}; dropped",
            unknown.iter().map(|e| e.param.as_str()).collect::<Vec<_>>()
        );
        let canonical = rules::canonical_map(family);
        for c in canonical.entries {
            if map.effect(&c.param).is_none() {
                map.entries.push(c);
            }
        }
    }
    map.validate(family).map_err(|e| e.to_string())?;
    map.entries.sort_by_key(|e| names.iter().position(|n| *n == e.param));
    Ok(map)
}

/// One-time control map. Unknown parameter names are dropped and the gaps
/// filled from the canonical map; an answer that simply omits a parameter
/// is rejected.
pub fn strategist(backend: &Backend, family: Family, problem_summary: &str) -> AgentReply<ControlMap> {
    let Backend::Llm(chat) = backend else { return AgentReply::rule(rules::canonical_map(family)) };
    let ctx = PromptContext { problem_summary: Some(problem_summary), ..Default::default() };
    let bundle = render(Role::Strategist, family, &ctx);
    let (result, raw, latency_ms) = consult(chat.as_ref(), &bundle, |text| match parse_agent_response(text, Role::Strategist) {
        Ok(AgentResponse::ControlMap(entries)) => sanitize_map(entries, family),
        Ok(_) => unreachable!("parser returns the requested role"),
        Err(e) => Err(e.to_string()),
    });
    match result {
        Ok(map) => AgentReply { value: map, fallback: None, raw, latency_ms, clamps: Vec::new() },
        Err(e) => substitute(Role::Strategist, rules::canonical_map(family), e, raw, latency_ms),
    }
}

fn rule_directive(features: Option<&ElaFeatures>, recent: &[&ExperienceRecord]) -> Directive {
    match features {
        Some(f) => rules::analyst_rule(f),
        None => rules::history_rule(recent),
    }
}

/// Directive for the current state. `features` is `None` when the landscape
/// view is withheld; the decision then rests on `recent` outcomes alone.
pub fn analyst(
    backend: &Backend,
    family: Family,
    features: Option<&ElaFeatures>,
    recent: &[&ExperienceRecord],
    map: &ControlMap,
) -> AgentReply<Directive> {
    let Backend::Llm(chat) = backend else { return AgentReply::rule(rule_directive(features, recent)) };
    let ctx = PromptContext { features, control_map: Some(map), examples: recent, ..Default::default() };
    let bundle = render(Role::Analyst, family, &ctx);
    let (result, raw, latency_ms) = consult(chat.as_ref(), &bundle, |text| match parse_agent_response(text, Role::Analyst) {
        Ok(AgentResponse::Directive(d)) => Ok(d),
        Ok(_) => unreachable!("parser returns the requested role"),
        Err(e) => Err(e.to_string()),
    });
    match result {
        Ok(d) => AgentReply { value: d, fallback: None, raw, latency_ms, clamps: Vec::new() },
        Err(e) => substitute(Role::Analyst, rule_directive(features, recent), e, raw, latency_ms),
    }
}

/// Applies proposed values on top of `current`. Unknown names are ignored,
/// omitted names keep their value, everything is clamped. At least one
/// tunable name must be present.
fn apply_proposal(
    current: &HyperParams,
    proposal: &std::collections::BTreeMap<String, f64>,
) -> Result<(HyperParams, Vec<Clamp>), String> {
    let mut next = *current;
    let mut clamps = Vec::new();
    let mut known = 0;
    for (name, &value) in proposal {
        if current.get(name).is_none() {
            log::info!("ignoring proposed value for unknown parameter {name:?}");
            continue;
        }
        known += 1;
        if let Some(c) = next.set(name, value)? {
            clamps.push(c);
        }
    }
    if known == 0 {
        return Err("no tunable parameter in the proposal".into());
    }
    Ok((next, clamps))
}

pub fn actuator(
    backend: &Backend,
    directive: &Directive,
    map: &ControlMap,
    current: &HyperParams,
    examples: &[&ExperienceRecord],
) -> AgentReply<HyperParams> {
    let rule = || rules::actuator_rule(directive, map, current);
    let Backend::Llm(chat) = backend else {
        let (value, clamps) = rule();
        return AgentReply { clamps, ..AgentReply::rule(value) };
    };
    let ctx = PromptContext {
        control_map: Some(map),
        directive: Some(directive),
        examples,
        current: Some(current),
        ..Default::default()
    };
    let bundle = render(Role::Actuator, current.family(), &ctx);
    let (result, raw, latency_ms) = consult(chat.as_ref(), &bundle, |text| match parse_agent_response(text, Role::Actuator) {
        Ok(AgentResponse::Params(p)) => apply_proposal(current, &p),
        Ok(_) => unreachable!("parser returns the requested role"),
        Err(e) => Err(e.to_string()),
    });
    match result {
        Ok((value, clamps)) => AgentReply { value, fallback: None, raw, latency_ms, clamps },
        Err(e) => {
            let (value, clamps) = rule();
            AgentReply { clamps, ..substitute(Role::Actuator, value, e, raw, latency_ms) }
        }
    }
}

/// The whole chain collapsed into one call. The rule stand-in has no
/// Strategist stage to temper its moves, so it always takes the large step
/// along the canonical map.
pub fn merged(
    backend: &Backend,
    features: Option<&ElaFeatures>,
    current: &HyperParams,
    examples: &[&ExperienceRecord],
) -> AgentReply<(Directive, HyperParams)> {
    let family = current.family();
    let rule = || {
        let d = rule_directive(features, examples);
        let d = Directive::new(d.axis, Strength::Large, d.rationale);
        let (p, clamps) = rules::actuator_rule(&d, &rules::canonical_map(family), current);
        ((d, p), clamps)
    };
    let Backend::Llm(chat) = backend else {
        let (value, clamps) = rule();
        return AgentReply { clamps, ..AgentReply::rule(value) };
    };
    let ctx = PromptContext { features, examples, current: Some(current), ..Default::default() };
    let bundle = render(Role::Merged, family, &ctx);
    let (result, raw, latency_ms) = consult(chat.as_ref(), &bundle, |text| match parse_agent_response(text, Role::Merged) {
        Ok(AgentResponse::Merged(d, p)) => {
            if d.axis == Axis::Hold && p.is_empty() {
                return Ok(((d, *current), Vec::new()));
            }
            apply_proposal(current, &p).map(|(params, clamps)| ((d, params), clamps))
        }
        Ok(_) => unreachable!("parser returns the requested role"),
        Err(e) => Err(e.to_string()),
    });
    match result {
        Ok((value, clamps)) => AgentReply { value, fallback: None, raw, latency_ms, clamps },
        Err(e) => {
            let (value, clamps) = rule();
            AgentReply { clamps, ..substitute(Role::Merged, value, e, raw, latency_ms) }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::LlmError;
    use std::collections::VecDeque;
    use std::sync::Mutex;

    /// Replays canned answers in order; `None` is a transport failure.
    struct Scripted(Mutex<VecDeque<Option<String>>>);

    impl Scripted {
        fn backend(answers: &[Option<&str>]) -> Backend {
            Backend::Llm(Arc::new(Scripted(Mutex::new(answers.iter().map(|a| a.map(String::from)).collect()))))
        }
    }

    impl ChatBackend for Scripted {
        fn chat(&self, _system: &str, _user: &str) -> Result<String, LlmError> {
            match self.0.lock().unwrap().pop_front() {
                Some(Some(text)) => Ok(text),
                _ => Err(LlmError::Network("scripted failure".into())),
            }
        }
    }

    fn features() -> ElaFeatures {
        ElaFeatures {
            skewness: -0.5,
            kurtosis: 1.2,
            r_squared: 0.1,
            dispersion_ratio: 0.9,
            variability: 0.8,
            degenerate_flags: Default::default(),
        }
    }

    #[test]
    fn hold_forces_small() {
        assert_eq!(Directive::new(Axis::Hold, Strength::Large, "").strength, Strength::Small);
        let d: Directive = serde_json::from_str(r#"{"axis":"Hold","strength":"Large"}"#).unwrap();
        assert_eq!(d.strength, Strength::Small);
    }

    #[test]
    fn rule_strategist_is_canonical() {
        let r = strategist(&Backend::Rule, Family::Ga, "eil51");
        assert_eq!(r.value, rules::canonical_map(Family::Ga));
        assert!(r.fallback.is_none());
    }

    #[test]
    fn strategist_missing_param_retries_then_falls_back() {
        let partial = r#"{"control_map": [{"param": "mutation_prob", "effect": "BoostsExploitation"}]}"#;
        let b = Scripted::backend(&[Some(partial), Some(partial)]);
        let r = strategist(&b, Family::Ga, "x");
        assert_eq!(r.value, rules::canonical_map(Family::Ga));
        assert!(r.fallback.unwrap().contains("crossover_prob"));
        assert_eq!(r.raw.len(), 2);
    }

    #[test]
    fn strategist_retry_can_succeed() {
        let good = r#"{"control_map": [
            {"param": "crossover_prob", "effect": "BoostsExploration"},
            {"param": "mutation_prob", "effect": "BoostsExploitation"}]}"#;
        let r = strategist(&Scripted::backend(&[Some("no idea"), Some(good)]), Family::Ga, "x");
        assert!(r.fallback.is_none());
        assert_eq!(r.value.effect("crossover_prob"), Some(EffectAxis::BoostsExploration));
    }

    #[test]
    fn strategist_unknown_param_dropped_and_filled() {
        let raw = r#"{"control_map": [
            {"param": "mutation_prob", "effect": "BoostsExploitation"},
            {"param": "temperature", "effect": "BoostsExploration"}]}"#;
        let r = strategist(&Scripted::backend(&[Some(raw)]), Family::Ga, "x");
        assert!(r.fallback.is_none());
        r.value.validate(Family::Ga).unwrap();
        assert_eq!(r.value.effect("mutation_prob"), Some(EffectAxis::BoostsExploitation));
        assert_eq!(r.value.effect("crossover_prob"), Some(EffectAxis::BoostsExploitation));
    }

    #[test]
    fn analyst_falls_back_to_rule_on_transport_failure() {
        let map = rules::canonical_map(Family::Ga);
        let r = analyst(&Scripted::backend(&[None, None]), Family::Ga, Some(&features()), &[], &map);
        assert_eq!(r.value, rules::analyst_rule(&features()));
        assert!(r.fallback.is_some());
        assert!(r.raw.is_empty());
    }

    #[test]
    fn analyst_accepts_model_directive() {
        let map = rules::canonical_map(Family::Ga);
        let raw = "```json\n{\"axis\": \"IncreaseExploitation\", \"strength\": \"Large\"}\n```";
        let r = analyst(&Scripted::backend(&[Some(raw)]), Family::Ga, Some(&features()), &[], &map);
        assert_eq!(r.value.axis, Axis::IncreaseExploitation);
        assert!(r.fallback.is_none());
    }

    #[test]
    fn actuator_clamps_model_values() {
        let map = rules::canonical_map(Family::Ga);
        let cur = HyperParams::defaults(Family::Ga);
        let d = Directive::new(Axis::IncreaseExploration, Strength::Small, "");
        let raw = r#"{"params": {"mutation_prob": 1.5, "crossover_prob": 0.5}}"#;
        let r = actuator(&Scripted::backend(&[Some(raw)]), &d, &map, &cur, &[]);
        assert_eq!(r.value.get("mutation_prob"), Some(1.0));
        assert_eq!(r.value.get("crossover_prob"), Some(0.5));
        assert_eq!(r.clamps, vec![Clamp { param: "mutation_prob".into(), requested: 1.5, applied: 1.0 }]);
    }

    #[test]
    fn actuator_unparseable_twice_uses_rule() {
        let map = rules::canonical_map(Family::Pso);
        let cur = HyperParams::defaults(Family::Pso);
        let d = Directive::new(Axis::IncreaseExploitation, Strength::Large, "");
        let r = actuator(&Scripted::backend(&[Some("{}"), Some("{\"params\": {\"bogus\": 1}}")]), &d, &map, &cur, &[]);
        assert_eq!(r.value, rules::actuator_rule(&d, &map, &cur).0);
        assert_eq!(r.raw.len(), 2);
        assert!(r.fallback.is_some());
    }

    #[test]
    fn rule_backend_is_pure() {
        let cur = HyperParams::defaults(Family::Aco);
        let a = merged(&Backend::Rule, Some(&features()), &cur, &[]);
        let b = merged(&Backend::Rule, Some(&features()), &cur, &[]);
        assert_eq!(a, b);
        assert_eq!(a.value.0.strength, Strength::Large);
    }

    #[test]
    fn merged_model_answer() {
        let cur = HyperParams::defaults(Family::Ga);
        let raw = r#"{"axis": "IncreaseExploration", "strength": "Small", "params": {"mutation_prob": 0.2}}"#;
        let r = merged(&Scripted::backend(&[Some(raw)]), None, &cur, &[]);
        assert_eq!(r.value.0.axis, Axis::IncreaseExploration);
        assert_eq!(r.value.1.get("mutation_prob"), Some(0.2));
        assert_eq!(r.value.1.get("crossover_prob"), Some(0.6));
    }
}
