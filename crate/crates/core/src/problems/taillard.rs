//! Taillard flow-shop files.
//!
//! ```text
//! number of jobs, number of machines, initial seed, upper bound and lower bound :
//!           20           5   873654221        1278        1232
//! processing times :
//!  54 83 15 ...      (one row per machine, one column per job)
//! ```
//!
//! A file may hold several instances back to back. The upper bound is used as
//! the instance's best-known makespan.

use std::fmt::Write as _;

use super::{Payload, ProblemError, ProblemInstance, ProblemKind, TaillardHeader};

/// Parses the first instance in `text`.
pub fn parse_taillard(text: &str, name: &str) -> Result<ProblemInstance, ProblemError> {
    let mut all = parse_blocks(text, name)?;
    Ok(all.swap_remove(0))
}

/// Parses every instance in `text`; with more than one, names get a `-k` suffix.
pub fn parse_taillard_all(text: &str, name: &str) -> Result<Vec<ProblemInstance>, ProblemError> {
    parse_blocks(text, name)
}

fn numbers(line: usize, row: &str) -> Result<Vec<u64>, ProblemError> {
    row.split_whitespace()
        .map(|t| t.parse::<u64>().map_err(|_| ProblemError::parse(line, format!("non-numeric value {t:?}"))))
        .collect()
}

fn parse_blocks(text: &str, name: &str) -> Result<Vec<ProblemInstance>, ProblemError> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    let last = text.lines().count().max(1);
    let mut blocks = Vec::new();
    let mut pos = 0;
    while pos < lines.len() {
        let (line, row) = lines[pos];
        if !row.to_ascii_lowercase().starts_with("number of jobs") {
            return Err(ProblemError::parse(line, format!("expected `number of jobs ...` header, got {row:?}")));
        }
        let (vline, vrow) = *lines.get(pos + 1).ok_or_else(|| ProblemError::parse(last, "missing header values"))?;
        let head = numbers(vline, vrow)?;
        let [jobs, machines, seed, upper, lower] = head[..] else {
            return Err(ProblemError::parse(vline, "expected 5 header values"));
        };
        let (pline, prow) = *lines.get(pos + 2).ok_or_else(|| ProblemError::parse(last, "missing `processing times :`"))?;
        if !prow.to_ascii_lowercase().starts_with("processing times") {
            return Err(ProblemError::parse(pline, format!("expected `processing times :`, got {prow:?}")));
        }
        let (jobs, machines) = (jobs as usize, machines as usize);
        if jobs == 0 || machines == 0 {
            return Err(ProblemError::parse(vline, "jobs and machines must be positive"));
        }
        let mut times = vec![vec![0u64; machines]; jobs];
        for m in 0..machines {
            let (tline, trow) = *lines
                .get(pos + 3 + m)
                .ok_or_else(|| ProblemError::parse(last, format!("missing processing times for machine {}", m + 1)))?;
            let row = numbers(tline, trow)?;
            if row.len() != jobs {
                return Err(ProblemError::parse(tline, format!("expected {jobs} processing times, got {}", row.len())));
            }
            for (j, t) in row.into_iter().enumerate() {
                times[j][m] = t;
            }
        }
        let header = (seed, upper, lower) != (0, 0, 0);
        let header = header.then_some(TaillardHeader { seed, upper_bound: upper, lower_bound: lower });
        blocks.push((times, header));
        pos += 3 + machines;
    }
    if blocks.is_empty() {
        return Err(ProblemError::parse(last, "no flow-shop instance found"));
    }
    let many = blocks.len() > 1;
    blocks
        .into_iter()
        .enumerate()
        .map(|(k, (times, header))| {
            let label = if many { format!("{name}-{}", k + 1) } else { name.to_string() };
            let best = header.and_then(|h| (h.upper_bound > 0).then_some(h.upper_bound as f64));
            Ok(ProblemInstance::new(ProblemKind::Fssp, label, Payload::FlowShop { times, header })?.with_best_known(best))
        })
        .collect()
}

/// Writes a flow-shop instance in Taillard's layout.
pub fn serialize_taillard(instance: &ProblemInstance) -> Option<String> {
    let Payload::FlowShop { times, header } = instance.payload() else {
        return None;
    };
    let h = header.unwrap_or(TaillardHeader { seed: 0, upper_bound: 0, lower_bound: 0 });
    let machines = times[0].len();
    let mut out = String::from("number of jobs, number of machines, initial seed, upper bound and lower bound :\n");
    let _ = writeln!(out, "{:>12}{:>12}{:>12}{:>12}{:>12}", times.len(), machines, h.seed, h.upper_bound, h.lower_bound);
    out.push_str("processing times :\n");
    for m in 0..machines {
        for job in times {
            let _ = write!(out, "{:>3}", job[m]);
        }
        out.push('\n');
    }
    Some(out)
}
