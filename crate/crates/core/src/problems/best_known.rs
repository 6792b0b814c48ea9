use std::collections::BTreeMap;
use std::path::Path;

use super::ProblemError;

const BUNDLED: &str = include_str!("../../data/best_known.txt");

/// Best-known objective values keyed by instance name.
///
/// Text format: one `name value` pair per line; `#` starts a comment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BestKnownTable {
    values: BTreeMap<String, f64>,
}

impl BestKnownTable {
    pub fn parse(text: &str) -> Result<Self, ProblemError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(name), Some(value), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(ProblemError::parse(i + 1, format!("expected `name value`, got {line:?}")));
            };
            let value: f64 = value
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite() && *v > 0.0)
                .ok_or_else(|| ProblemError::parse(i + 1, format!("best-known value must be a positive number: {value:?}")))?;
            values.insert(name.to_string(), value);
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> std::io::Result<Result<Self, ProblemError>> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    /// The table shipped with the crate.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED).expect("bundled best-known table is well formed")
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: f64) {
        self.values.insert(name.into(), value);
    }

    /// Entries of `other` win over existing ones.
    pub fn merge(&mut self, other: BestKnownTable) {
        self.values.extend(other.values);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_table_has_eil51() {
        assert_eq!(BestKnownTable::bundled().get("eil51"), Some(426.0));
        assert_eq!(BestKnownTable::bundled().get("ta001"), Some(1278.0));
    }

    #[test]
    fn malformed_lines_rejected() {
        assert!(BestKnownTable::parse("eil51 426 extra").is_err());
        assert!(BestKnownTable::parse("eil51 -3").is_err());
        assert_eq!(BestKnownTable::parse("# only a comment\n\n").unwrap().len(), 0);
    }
}
