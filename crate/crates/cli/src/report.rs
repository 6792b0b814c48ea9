//! Summary rows, the text report and convergence data.
//!
//! Gaps print with 2 decimals and times in minutes with 1, like the usual
//! benchmark tables. Rows are sorted, so the same inputs always give the
//! same bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use elaloop::controller::{mean_std, Mode, RunResult};
use elaloop::metaheuristics::Algorithm;
use serde::Serialize;

/// Identifies one table row.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct RowKey {
    pub mode: Mode,
    pub instance: String,
    pub algorithm: Algorithm,
    pub backend: String,
    pub interval: usize,
}

impl RowKey {
    pub fn of(r: &RunResult) -> Self {
        Self {
            mode: r.mode,
            instance: r.instance.clone(),
            algorithm: r.algorithm,
            backend: r.backend.clone(),
            interval: r.decision_interval,
        }
    }
}

/// One CSV line. The first seven columns follow the benchmark-table layout.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub instance: String,
    pub algorithm: String,
    pub mode: String,
    pub backend: String,
    pub mean_opt_gap_pct: String,
    pub std: String,
    pub mean_time_min: String,
    pub interval: usize,
    pub runs: usize,
    pub mean_best_fitness: String,
    pub std_best_fitness: String,
    pub excluded: usize,
}

fn fixed(v: Option<f64>, decimals: usize) -> String {
    v.map_or_else(String::new, |v| format!("{v:.decimals$}"))
}

/// Aggregates completed runs of one cell; `runs` may be empty when every
/// repeat failed.
pub fn summarize(key: &RowKey, runs: &[&RunResult], excluded: usize) -> SummaryRow {
    let bests: Vec<f64> = runs.iter().map(|r| r.best_fitness).collect();
    let gaps: Option<Vec<f64>> = runs.iter().map(|r| r.opt_gap_pct).collect();
    let gap = gaps.filter(|g| !g.is_empty()).map(|g| mean_std(&g));
    let best = (!bests.is_empty()).then(|| mean_std(&bests));
    let minutes: Vec<f64> = runs.iter().map(|r| r.total_wall_ms as f64 / 60_000.0).collect();
    SummaryRow {
        instance: key.instance.clone(),
        algorithm: key.algorithm.label().to_string(),
        mode: key.mode.label().to_string(),
        backend: key.backend.clone(),
        mean_opt_gap_pct: fixed(gap.map(|g| g.0), 2),
        std: fixed(gap.map(|g| g.1), 2),
        mean_time_min: fixed((!minutes.is_empty()).then(|| mean_std(&minutes).0), 1),
        interval: key.interval,
        runs: runs.len(),
        mean_best_fitness: fixed(best.map(|b| b.0), 2),
        std_best_fitness: fixed(best.map(|b| b.1), 2),
        excluded,
    }
}

pub fn write_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    if rows.is_empty() {
        w.write_record([
            "instance",
            "algorithm",
            "mode",
            "backend",
            "mean_opt_gap_pct",
            "std",
            "mean_time_min",
            "interval",
            "runs",
            "mean_best_fitness",
            "std_best_fitness",
            "excluded",
        ])?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Text tables, one block per mode.
pub fn render_table(rows: &[SummaryRow]) -> String {
    let header = ["instance", "algorithm", "backend", "F", "runs", "best", "gap(%)", "std", "time(min)"];
    let mut by_mode: BTreeMap<Mode, Vec<&SummaryRow>> = BTreeMap::new();
    for r in rows {
        by_mode.entry(r.mode.parse().expect("rows carry valid modes")).or_default().push(r);
    }
    let mut out = String::new();
    if rows.is_empty() {
        out.push_str("no runs found\n");
        return out;
    }
    for (mode, rows) in by_mode {
        let cells: Vec<[String; 9]> = rows
            .iter()
            .map(|r| {
                [
                    r.instance.clone(),
                    r.algorithm.clone(),
                    r.backend.clone(),
                    r.interval.to_string(),
                    r.runs.to_string(),
                    r.mean_best_fitness.clone(),
                    r.mean_opt_gap_pct.clone(),
                    r.std.clone(),
                    r.mean_time_min.clone(),
                ]
            })
            .collect();
        let mut widths = header.map(str::len);
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let _ = writeln!(out, "mode: {mode}");
        let line = |cols: Vec<&str>| {
            cols.iter()
                .zip(widths)
                .enumerate()
                .map(|(i, (c, w))| if i < 3 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        let _ = writeln!(out, "{}", line(header.to_vec()));
        let _ = writeln!(out, "{}", widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
        for row in &cells {
            let _ = writeln!(out, "{}", line(row.iter().map(String::as_str).collect()));
        }
        out.push('\n');
    }
    out
}

/// Every `*.result.json` in `dir` and `dir/runs`, sorted by run id.
pub fn load_results(dir: &Path) -> Result<Vec<RunResult>> {
    let mut paths: Vec<PathBuf> = Vec::new();
    for sub in [dir.to_path_buf(), dir.join("runs")] {
        let pattern = sub.join("*.result.json");
        for p in glob::glob(&pattern.to_string_lossy()).context("bad results path")? {
            paths.push(p?);
        }
    }
    let mut results = Vec::new();
    for p in paths {
        let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
        let r: RunResult = serde_json::from_str(&text).with_context(|| format!("decoding {}", p.display()))?;
        results.push(r);
    }
    results.sort_by(|a, b| a.run_id.cmp(&b.run_id));
    results.dedup_by(|a, b| a.run_id == b.run_id);
    Ok(results)
}

pub fn rows_from_results(results: &[RunResult]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<RowKey, Vec<&RunResult>> = BTreeMap::new();
    for r in results {
        groups.entry(RowKey::of(r)).or_default().push(r);
    }
    groups.iter().map(|(k, runs)| summarize(k, runs, 0)).collect()
}

/// `generation,best_fitness` per generation.
pub fn convergence_csv(result: &RunResult) -> String {
    let mut out = String::from("generation,best_fitness\n");
    for (g, f) in result.fitness_trace.iter().enumerate() {
        let _ = writeln!(out, "{g},{f}");
    }
    out
}

/// Writes `report.txt`, `report.csv` and, if asked, `convergence/*.csv` into
/// `out`, returning the text report.
pub fn write_report(results_dir: &Path, out: &Path, convergence: bool) -> Result<String> {
    let results = load_results(results_dir)?;
    if results.is_empty() {
        log::warn!("no run results under {}", results_dir.display());
    }
    let rows = rows_from_results(&results);
    let text = render_table(&rows);
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    std::fs::write(out.join("report.txt"), &text)?;
    write_csv(&out.join("report.csv"), &rows)?;
    if convergence && !results.is_empty() {
        let dir = out.join("convergence");
        std::fs::create_dir_all(&dir)?;
        for r in &results {
            std::fs::write(dir.join(format!("{}.csv", r.run_id)), convergence_csv(r))?;
        }
    }
    Ok(text)
}
