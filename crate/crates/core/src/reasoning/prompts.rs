//! Prompt templates and rendering.
//!
//! Templates live in `prompts/<role>_<family>.txt` and use the placeholders
//! `{features}`, `{control_map}`, `{directive}`, `{examples}`, `{bounds}` and
//! `{problem_summary}`. Literal braces in the JSON answer formats are left
//! untouched because only those exact names are substituted.

use std::fmt::Write as _;

use serde::Serialize;

use super::{ControlMap, Directive, Role};
use crate::ela::ElaFeatures;
use crate::experience::ExperienceRecord;
use crate::metaheuristics::{bounds, Family, HyperParams};

pub const SCHEMA_VERSION: &str = "1";

const PLACEHOLDERS: [&str; 6] = ["features", "control_map", "directive", "examples", "bounds", "problem_summary"];

pub fn template(role: Role, family: Family) -> &'static str {
    use Family::*;
    use Role::*;
    match (role, family) {
        (Strategist, Ga) => include_str!("../../prompts/strategist_ga.txt"),
        (Strategist, Pso) => include_str!("../../prompts/strategist_pso.txt"),
        (Strategist, Aco) => include_str!("../../prompts/strategist_aco.txt"),
        (Analyst, Ga) => include_str!("../../prompts/analyst_ga.txt"),
        (Analyst, Pso) => include_str!("../../prompts/analyst_pso.txt"),
        (Analyst, Aco) => include_str!("../../prompts/analyst_aco.txt"),
        (Actuator, Ga) => include_str!("../../prompts/actuator_ga.txt"),
        (Actuator, Pso) => include_str!("../../prompts/actuator_pso.txt"),
        (Actuator, Aco) => include_str!("../../prompts/actuator_aco.txt"),
        (Merged, Ga) => include_str!("../../prompts/merged_ga.txt"),
        (Merged, Pso) => include_str!("../../prompts/merged_pso.txt"),
        (Merged, Aco) => include_str!("../../prompts/merged_aco.txt"),
    }
}

pub fn system_message(role: Role) -> &'static str {
    match role {
        Role::Strategist => "You map metaheuristic hyperparameters to their effect on exploration and exploitation. Reply with JSON only.",
        Role::Analyst => "You diagnose the state of a running metaheuristic from landscape features. Reply with JSON only.",
        Role::Actuator => "You turn a search directive into concrete hyperparameter values. Reply with JSON only.",
        Role::Merged => "You tune the hyperparameters of a running metaheuristic. Reply with JSON only.",
    }
}

/// A rendered prompt ready to send.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PromptBundle {
    pub role: Role,
    pub algorithm: Family,
    pub rendered_text: String,
    pub schema_version: &'static str,
}

/// Values substituted into a template; absent values render as a short
/// "not available" note.
#[derive(Debug, Default, Clone)]
pub struct PromptContext<'a> {
    pub features: Option<&'a ElaFeatures>,
    pub control_map: Option<&'a ControlMap>,
    pub directive: Option<&'a Directive>,
    pub examples: &'a [&'a ExperienceRecord],
    pub current: Option<&'a HyperParams>,
    pub problem_summary: Option<&'a str>,
}

pub fn render(role: Role, family: Family, ctx: &PromptContext<'_>) -> PromptBundle {
    let mut text = template(role, family).to_string();
    for name in PLACEHOLDERS {
        let key = format!("{{{name}}}");
        if !text.contains(&key) {
            continue;
        }
        let value = match name {
            "features" => ctx.features.map_or_else(|| "Not available.".to_string(), ElaFeatures::to_record),
            "control_map" => ctx.control_map.map_or_else(|| "Not available.".to_string(), format_control_map),
            "directive" => ctx.directive.map_or_else(|| "Not available.".to_string(), format_directive),
            "examples" => format_examples(ctx.examples),
            "bounds" => ctx.current.map_or_else(|| "Not available.".to_string(), format_bounds),
            "problem_summary" => ctx.problem_summary.unwrap_or("Not available.").to_string(),
            _ => unreachable!(),
        };
        text = text.replace(&key, &value);
    }
    PromptBundle { role, algorithm: family, rendered_text: text, schema_version: SCHEMA_VERSION }
}

pub fn format_control_map(map: &ControlMap) -> String {
    let mut out = String::new();
    for e in &map.entries {
        let _ = writeln!(out, "- {}: {:?} ({})", e.param, e.effect, e.note);
    }
    out.trim_end().to_string()
}

pub fn format_directive(d: &Directive) -> String {
    format!("axis={:?} strength={:?} rationale={}", d.axis, d.strength, d.rationale)
}

pub fn format_bounds(params: &HyperParams) -> String {
    let mut out = String::new();
    for name in params.names() {
        let (lo, hi) = bounds(name).expect("known parameter");
        let _ = writeln!(out, "- {name} = {} (range [{lo}, {hi}])", params.get(name).expect("own parameter"));
    }
    out.trim_end().to_string()
}

fn format_params(params: &HyperParams) -> String {
    params
        .names()
        .iter()
        .map(|n| format!("{n}={}", params.get(n).expect("own parameter")))
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn format_example(r: &ExperienceRecord) -> String {
    let f = &r.features;
    format!(
        "generation={} features(skewness={:.4}, kurtosis={:.4}, r_squared={:.4}, dispersion_ratio={:.4}, variability={:.4}) directive={:?}/{:?} params_before({}) params_after({}) outcome_delta={}",
        r.generation,
        f.skewness,
        f.kurtosis,
        f.r_squared,
        f.dispersion_ratio,
        f.variability,
        r.directive.axis,
        r.directive.strength,
        format_params(&r.params_before),
        format_params(&r.params_after),
        r.outcome_delta
    )
}

pub fn format_examples(examples: &[&ExperienceRecord]) -> String {
    if examples.is_empty() {
        return "None yet.".to_string();
    }
    examples.iter().map(|r| format!("- {}", format_example(r))).collect::<Vec<_>>().join("\n")
}
