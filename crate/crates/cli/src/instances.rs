//! Resolving instance references from a spec.
//!
//! An entry is either `uav:<nodes>:<seed>`, a path, or a glob. Relative
//! paths and globs are taken from the data directory. The loader is chosen
//! by extension: `.tsp` TSPLIB (including `TYPE : UAV`), `.vrp` VRPLIB,
//! `.txt`/`.fsp` Taillard flow shop.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use elaloop::problems::{
    generate_uav_instance, parse_taillard_all, parse_tsplib, parse_vrplib, BestKnownTable, ProblemInstance,
};

/// What an entry resolved to, before loading.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Source {
    File(PathBuf),
    Uav { nodes: usize, seed: u64 },
}

fn parse_uav(entry: &str) -> Result<Option<Source>> {
    let Some(rest) = entry.strip_prefix("uav:") else { return Ok(None) };
    let (nodes, seed) = rest.split_once(':').with_context(|| format!("{entry:?}: expected uav:<nodes>:<seed>"))?;
    let nodes = nodes.parse().with_context(|| format!("{entry:?}: bad node count"))?;
    let seed = seed.parse().with_context(|| format!("{entry:?}: bad seed"))?;
    Ok(Some(Source::Uav { nodes, seed }))
}

/// Expands entries to sources; every file must exist and every glob match.
pub fn resolve(entries: &[String], data_dir: &Path) -> Result<Vec<Source>> {
    let mut out = Vec::new();
    for entry in entries {
        if let Some(uav) = parse_uav(entry)? {
            out.push(uav);
            continue;
        }
        let full = if Path::new(entry).is_absolute() { PathBuf::from(entry) } else { data_dir.join(entry) };
        let pattern = full.to_string_lossy().into_owned();
        if entry.contains(['*', '?', '[']) {
            let mut matched: Vec<PathBuf> = glob::glob(&pattern)
                .with_context(|| format!("bad glob {entry:?}"))?
                .collect::<Result<_, _>>()
                .with_context(|| format!("reading matches of {entry:?}"))?;
            matched.sort();
            if matched.is_empty() {
                bail!("instance glob {entry:?} matches nothing under {}", data_dir.display());
            }
            out.extend(matched.into_iter().map(Source::File));
        } else if full.is_file() {
            out.push(Source::File(full));
        } else {
            bail!("instance file {} does not exist", full.display());
        }
    }
    Ok(out)
}

/// Loads a source; a Taillard file may hold several instances. Best-known
/// values come from `table` unless the file carries its own.
pub fn load(source: &Source, table: &BestKnownTable) -> Result<Vec<Arc<ProblemInstance>>> {
    let instances = match source {
        Source::Uav { nodes, seed } => vec![generate_uav_instance(*nodes, *seed)?],
        Source::File(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
            let parsed = match ext.as_str() {
                "tsp" => parse_tsplib(&text).map(|i| vec![i]),
                "vrp" => parse_vrplib(&text).map(|i| vec![i]),
                "txt" | "fsp" => {
                    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("flowshop");
                    parse_taillard_all(&text, stem)
                }
                other => bail!("{}: unsupported instance extension {other:?}", path.display()),
            };
            parsed.with_context(|| format!("parsing {}", path.display()))?
        }
    };
    Ok(instances
        .into_iter()
        .map(|i| {
            let known = i.best_known().or_else(|| table.get(i.name()));
            Arc::new(i.with_best_known(known))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uav_entries() {
        let dir = tempfile::tempdir().unwrap();
        let got = resolve(&["uav:12:3".into()], dir.path()).unwrap();
        assert_eq!(got, vec![Source::Uav { nodes: 12, seed: 3 }]);
        let inst = load(&got[0], &BestKnownTable::default()).unwrap();
        assert_eq!(inst[0].name(), "uav-n12-s3");
        assert!(resolve(&["uav:x:1".into()], dir.path()).is_err());
    }

    #[test]
    fn missing_files_and_empty_globs_fail() {
        let dir = tempfile::tempdir().unwrap();
        assert!(resolve(&["nope.tsp".into()], dir.path()).is_err());
        assert!(resolve(&["*.tsp".into()], dir.path()).is_err());
    }

    #[test]
    fn globs_are_sorted() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["b.tsp", "a.tsp", "c.vrp"] {
            std::fs::write(dir.path().join(name), "").unwrap();
        }
        let got = resolve(&["*.tsp".into()], dir.path()).unwrap();
        assert_eq!(got, vec![Source::File(dir.path().join("a.tsp")), Source::File(dir.path().join("b.tsp"))]);
    }
}
