//! Strict extraction of agent responses.
//!
//! Model output is free text. The first well-formed JSON object anywhere in
//! it (surrounding prose and code fences are ignored) is validated against
//! the schema of the role that produced it.

use std::collections::BTreeMap;

use serde_json::{Map, Value};
use thiserror::Error;

use super::{Axis, Directive, EffectAxis, Role, Strength};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchemaViolation {
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error("field `{field}` should be {expected}")]
    WrongType { field: String, expected: &'static str },
    #[error("field `{field}` has unknown value {value:?}")]
    UnknownLiteral { field: &'static str, value: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ResponseError {
    #[error("no JSON object found in response")]
    NoJsonFound,
    #[error("response does not match the schema: {0}")]
    SchemaMismatch(#[from] SchemaViolation),
}

/// One control-map line as the model wrote it (names not yet checked).
#[derive(Debug, Clone, PartialEq)]
pub struct RawControlEntry {
    pub param: String,
    pub effect: EffectAxis,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AgentResponse {
    ControlMap(Vec<RawControlEntry>),
    Directive(Directive),
    Params(BTreeMap<String, f64>),
    Merged(Directive, BTreeMap<String, f64>),
}

/// Byte-level entry point; invalid UTF-8 is replaced, never rejected.
pub fn parse_agent_response_bytes(raw: &[u8], expected: Role) -> Result<AgentResponse, ResponseError> {
    parse_agent_response(&String::from_utf8_lossy(raw), expected)
}

pub fn parse_agent_response(raw: &str, expected: Role) -> Result<AgentResponse, ResponseError> {
    let object = first_json_object(raw).ok_or(ResponseError::NoJsonFound)?;
    Ok(match expected {
        Role::Strategist => AgentResponse::ControlMap(control_map(&object)?),
        Role::Analyst => AgentResponse::Directive(directive(&object)?),
        Role::Actuator => AgentResponse::Params(params(&object)?),
        Role::Merged => AgentResponse::Merged(directive(&object)?, params(&object)?),
    })
}

/// The first `{`-delimited span that parses as a JSON object.
pub fn first_json_object(raw: &str) -> Option<Map<String, Value>> {
    raw.match_indices('{').find_map(|(start, _)| {
        let mut stream = serde_json::Deserializer::from_str(&raw[start..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(Value::Object(map))) => Some(map),
            _ => None,
        }
    })
}

fn literal<T>(obj: &Map<String, Value>, field: &'static str, table: &[(&str, T)]) -> Result<T, SchemaViolation>
where
    T: Copy,
{
    let value = obj.get(field).ok_or(SchemaViolation::MissingField(field))?;
    let text = value
        .as_str()
        .ok_or_else(|| SchemaViolation::WrongType { field: field.to_string(), expected: "a string" })?;
    table
        .iter()
        .find(|(name, _)| name.eq_ignore_ascii_case(text.trim()))
        .map(|(_, v)| *v)
        .ok_or_else(|| SchemaViolation::UnknownLiteral { field, value: text.to_string() })
}

fn optional_string(obj: &Map<String, Value>, field: &str) -> Result<String, SchemaViolation> {
    match obj.get(field) {
        None | Some(Value::Null) => Ok(String::new()),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(SchemaViolation::WrongType { field: field.to_string(), expected: "a string" }),
    }
}

const AXES: &[(&str, Axis)] = &[
    ("IncreaseExploration", Axis::IncreaseExploration),
    ("IncreaseExploitation", Axis::IncreaseExploitation),
    ("Hold", Axis::Hold),
];
const STRENGTHS: &[(&str, Strength)] = &[("Small", Strength::Small), ("Large", Strength::Large)];
const EFFECTS: &[(&str, EffectAxis)] = &[
    ("BoostsExploration", EffectAxis::BoostsExploration),
    ("BoostsExploitation", EffectAxis::BoostsExploitation),
];

fn directive(obj: &Map<String, Value>) -> Result<Directive, SchemaViolation> {
    let axis = literal(obj, "axis", AXES)?;
    let strength = literal(obj, "strength", STRENGTHS)?;
    Ok(Directive::new(axis, strength, optional_string(obj, "rationale")?))
}

fn params(obj: &Map<String, Value>) -> Result<BTreeMap<String, f64>, SchemaViolation> {
    let inner = obj.get("params").ok_or(SchemaViolation::MissingField("params"))?;
    let inner = inner
        .as_object()
        .ok_or_else(|| SchemaViolation::WrongType { field: "params".into(), expected: "an object" })?;
    inner
        .iter()
        .map(|(k, v)| {
            v.as_f64()
                .map(|f| (k.clone(), f))
                .ok_or_else(|| SchemaViolation::WrongType { field: format!("params.{k}"), expected: "a number" })
        })
        .collect()
}

fn control_map(obj: &Map<String, Value>) -> Result<Vec<RawControlEntry>, SchemaViolation> {
    let list = obj.get("control_map").ok_or(SchemaViolation::MissingField("control_map"))?;
    let list = list
        .as_array()
        .ok_or_else(|| SchemaViolation::WrongType { field: "control_map".into(), expected: "an array" })?;
    list.iter()
        .map(|entry| {
            let entry = entry
                .as_object()
                .ok_or_else(|| SchemaViolation::WrongType { field: "control_map[]".into(), expected: "an object" })?;
            let param = entry
                .get("param")
                .ok_or(SchemaViolation::MissingField("param"))?
                .as_str()
                .ok_or_else(|| SchemaViolation::WrongType { field: "param".into(), expected: "a string" })?;
            Ok(RawControlEntry {
                param: param.to_string(),
                effect: literal(entry, "effect", EFFECTS)?,
                note: optional_string(entry, "note")?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fenced_json_parses() {
        let raw = "Here is my decision:\n```json\n{\"axis\": \"IncreaseExploration\", \"strength\": \"Large\", \"rationale\": \"stagnating\"}\n```\n";
        let AgentResponse::Directive(d) = parse_agent_response(raw, Role::Analyst).unwrap() else { panic!() };
        assert_eq!((d.axis, d.strength), (Axis::IncreaseExploration, Strength::Large));
        assert_eq!(d.rationale, "stagnating");
    }

    #[test]
    fn prose_without_json() {
        assert_eq!(
            parse_agent_response("I would increase exploration.", Role::Analyst),
            Err(ResponseError::NoJsonFound)
        );
        assert_eq!(parse_agent_response("{not json} [1,2]", Role::Analyst), Err(ResponseError::NoJsonFound));
    }

    #[test]
    fn unknown_literal_is_schema_mismatch() {
        let raw = r#"{"axis": "EXPLORE_MORE", "strength": "Small"}"#;
        assert_eq!(
            parse_agent_response(raw, Role::Analyst),
            Err(ResponseError::SchemaMismatch(SchemaViolation::UnknownLiteral {
                field: "axis",
                value: "EXPLORE_MORE".into()
            }))
        );
    }

    #[test]
    fn distinct_error_kinds() {
        let missing = parse_agent_response(r#"{"strength": "Small"}"#, Role::Analyst);
        assert_eq!(missing, Err(ResponseError::SchemaMismatch(SchemaViolation::MissingField("axis"))));
        let wrong = parse_agent_response(r#"{"params": {"mutation_prob": "high"}}"#, Role::Actuator);
        assert!(matches!(wrong, Err(ResponseError::SchemaMismatch(SchemaViolation::WrongType { .. }))));
    }

    #[test]
    fn skips_malformed_prefix_objects() {
        let raw = r#"draft {"params": } final {"params": {"mutation_prob": 0.2}}"#;
        let AgentResponse::Params(p) = parse_agent_response(raw, Role::Actuator).unwrap() else { panic!() };
        assert_eq!(p["mutation_prob"], 0.2);
    }

    #[test]
    fn control_map_and_merged_schemas() {
        let raw = r#"{"control_map": [{"param": "mutation_prob", "effect": "BoostsExploration", "note": "more swaps"}]}"#;
        let AgentResponse::ControlMap(m) = parse_agent_response(raw, Role::Strategist).unwrap() else { panic!() };
        assert_eq!(m[0].effect, EffectAxis::BoostsExploration);
        let raw = r#"{"axis": "Hold", "strength": "Large", "params": {}}"#;
        let AgentResponse::Merged(d, p) = parse_agent_response(raw, Role::Merged).unwrap() else { panic!() };
        assert_eq!(d.strength, Strength::Small, "Hold is always Small");
        assert!(p.is_empty());
    }

    proptest! {
        #[test]
        fn never_panics_on_bytes(raw in proptest::collection::vec(any::<u8>(), 0..256)) {
            for role in [Role::Strategist, Role::Analyst, Role::Actuator, Role::Merged] {
                let _ = parse_agent_response_bytes(&raw, role);
            }
        }

        #[test]
        fn never_panics_on_jsonish_text(raw in r#"[{}\[\]":,a-z0-9. \-eE]{0,120}"#) {
            let _ = parse_agent_response(&raw, Role::Actuator);
        }
    }
}
