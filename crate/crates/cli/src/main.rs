//! Command-line harness: runs experiment grids and builds reports.

mod instances;
mod report;
mod spec;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use elaloop::controller::{run_repeated, Mode, RunConfig};
use elaloop::llm::{ApiKey, LlmClient, LlmConfig, API_KEY_ENV};
use elaloop::metaheuristics::HyperParams;
use elaloop::problems::BestKnownTable;
use elaloop::reasoning::Backend;

use report::{RowKey, SummaryRow};
use spec::{BackendKind, ExperimentSpec};

#[derive(Parser)]
#[command(name = "elaloop", version, about = "Landscape-aware online tuning of metaheuristics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every cell of a spec.
    Run(RunArgs),
    /// Run the four-way component grid (full, no-ela, no-cor, no-ela-no-cor).
    Ablate(RunArgs),
    /// Run the spec with decision intervals 1, 3, 5 and 10.
    SweepFrequency(RunArgs),
    /// Tabulate finished runs in a directory.
    Report {
        dir: PathBuf,
        /// Where report files go; defaults to `dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Skip the per-run convergence CSVs.
        #[arg(long)]
        no_convergence: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    spec: PathBuf,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    backend: Option<BackendKind>,
    /// Base seed; overrides the spec.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run_grid(&args, |s| s),
        Command::Ablate(args) => run_grid(&args, ExperimentSpec::ablation),
        Command::SweepFrequency(args) => run_grid(&args, ExperimentSpec::frequency_sweep),
        Command::Report { dir, out, no_convergence } => {
            let out = out.unwrap_or_else(|| dir.clone());
            report::write_report(&dir, &out, !no_convergence).map(|text| {
                print!("{text}");
                true
            })
        }
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

struct Cell {
    config: RunConfig,
    key: RowKey,
}

fn relative_to(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn best_known_table(spec: &ExperimentSpec, data_dir: &Path, spec_dir: &Path) -> Result<BestKnownTable> {
    let mut table = BestKnownTable::bundled();
    let mut extra = Vec::new();
    let local = data_dir.join("best_known.txt");
    if local.is_file() {
        extra.push(local);
    }
    if let Some(p) = &spec.best_known {
        extra.push(relative_to(spec_dir, p));
    }
    for path in extra {
        let parsed = BestKnownTable::load(&path)
            .with_context(|| format!("reading {}", path.display()))?
            .with_context(|| format!("parsing {}", path.display()))?;
        table.merge(parsed);
    }
    Ok(table)
}

fn llm_backend(spec: &ExperimentSpec) -> Result<Backend> {
    let Some(section) = &spec.llm else { bail!("backend llm needs an [llm] section with base_url and model") };
    let mut config = LlmConfig::new(section.base_url.clone(), section.model.clone());
    config.api_key = ApiKey::from_env();
    if config.api_key.is_none() {
        log::warn!("{API_KEY_ENV} is not set; requests go out without a key");
    }
    if let Some(v) = section.timeout_ms {
        config.timeout_ms = v;
    }
    if let Some(v) = section.max_retries {
        config.max_retries = v;
    }
    if let Some(v) = section.temperature {
        config.temperature = v;
    }
    if let Some(v) = section.concurrency_limit {
        config.concurrency_limit = v;
    }
    config.debug_log = section.debug_log.clone();
    let client = LlmClient::new(config).context("configuring the model client")?;
    Ok(Backend::Llm(Arc::new(client)))
}

/// Resolves and validates every cell before anything runs.
fn plan(spec: &ExperimentSpec, args: &RunArgs, spec_dir: &Path, runs_dir: &Path) -> Result<Vec<Cell>> {
    let data_dir = match (&args.data_dir, &spec.data_dir) {
        (Some(d), _) => d.clone(),
        (None, Some(d)) => relative_to(spec_dir, d),
        (None, None) => spec_dir.to_path_buf(),
    };
    let table = best_known_table(spec, &data_dir, spec_dir)?;
    let kind = args.backend.or(spec.backend).unwrap_or(BackendKind::Rule);
    let needs_backend = spec.experiments.iter().any(|e| e.modes.iter().any(|m| *m != Mode::StaticBaseline));
    let backend = match kind {
        BackendKind::Llm if needs_backend => llm_backend(spec)?,
        _ => Backend::Rule,
    };
    let seed = args.seed.unwrap_or(spec.seed);

    let mut cells = Vec::new();
    for (i, exp) in spec.experiments.iter().enumerate() {
        let sources = instances::resolve(&exp.instances, &data_dir).with_context(|| format!("experiment #{}", i + 1))?;
        let mut loaded = Vec::new();
        for s in &sources {
            loaded.extend(instances::load(s, &table)?);
        }
        for inst in &loaded {
            for &algorithm in &exp.algorithms {
                let defaults = HyperParams::defaults(algorithm.family());
                let mut params = defaults.with_budget(
                    exp.population.unwrap_or(defaults.population_size),
                    exp.iterations.unwrap_or(defaults.max_iterations),
                );
                for (name, &value) in &exp.params {
                    let clamp = params
                        .set(name, value)
                        .map_err(|e| anyhow::anyhow!("experiment #{}: {algorithm}: {e}", i + 1))?;
                    if let Some(c) = clamp {
                        log::warn!("{}: {} clamped from {} to {}", algorithm, c.param, c.requested, c.applied);
                    }
                }
                for &mode in &exp.modes {
                    for &interval in &exp.intervals {
                        let mut config = RunConfig::new(inst.clone(), algorithm);
                        config.initial_params = params;
                        config.seed = seed;
                        config.decision_interval = interval;
                        config.mode = mode;
                        config.backend = backend.clone();
                        if let Some(q) = exp.quantile {
                            config.ela_quantile = q;
                        }
                        if let Some(w) = exp.window {
                            config.window = w;
                        }
                        if let Some(k) = exp.examples {
                            config.examples_k = k;
                        }
                        config.output_dir = Some(runs_dir.to_path_buf());
                        config.label = format!("{}-{}-{}-F{}", inst.name(), algorithm, mode, interval);
                        config.validate().with_context(|| format!("cell {}", config.label))?;
                        let backend_label = if mode == Mode::StaticBaseline { "none" } else { kind.label() };
                        let key = RowKey {
                            mode,
                            instance: inst.name().to_string(),
                            algorithm,
                            backend: backend_label.to_string(),
                            interval,
                        };
                        cells.push(Cell { config, key });
                    }
                }
            }
        }
    }
    Ok(cells)
}

fn run_grid(args: &RunArgs, expand: impl FnOnce(ExperimentSpec) -> ExperimentSpec) -> Result<bool> {
    let spec = expand(ExperimentSpec::load(&args.spec)?);
    let spec_dir = args.spec.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new(".")).to_path_buf();
    let out = match (&args.out, &spec.output_dir) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => relative_to(&spec_dir, o),
        (None, None) => PathBuf::from("results"),
    };
    let runs_dir = out.join("runs");
    let cells = plan(&spec, args, &spec_dir, &runs_dir)?;
    std::fs::create_dir_all(&runs_dir).with_context(|| format!("creating {}", runs_dir.display()))?;
    log::info!("{} cells x {} repeats", cells.len(), spec.repeats);

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = args.jobs {
        anyhow::ensure!(j > 0, "--jobs must be positive");
        builder = builder.num_threads(j);
    }
    let pool = builder.build().context("starting worker threads")?;

    let mut rows: Vec<SummaryRow> = Vec::new();
    let mut failed = 0;
    for cell in &cells {
        let row = match pool.install(|| run_repeated(&cell.config, spec.repeats)) {
            Ok(summary) => {
                for ex in &summary.excluded {
                    eprintln!("{} seed {}: {}", cell.config.label, ex.seed, ex.error);
                }
                let runs: Vec<_> = summary.runs.iter().collect();
                report::summarize(&cell.key, &runs, summary.excluded.len())
            }
            Err(e) => {
                eprintln!("{}: every run failed: {e}", cell.config.label);
                failed += 1;
                report::summarize(&cell.key, &[], spec.repeats)
            }
        };
        rows.push(row);
    }
    rows.sort_by(|a, b| {
        let ka = (a.mode.parse::<Mode>().ok(), &a.instance, &a.algorithm, &a.backend, a.interval);
        let kb = (b.mode.parse::<Mode>().ok(), &b.instance, &b.algorithm, &b.backend, b.interval);
        ka.cmp(&kb)
    });
    report::write_csv(&out.join("summary.csv"), &rows)?;
    print!("{}", report::render_table(&rows));
    if spec.convergence {
        report::write_report(&out, &out, true)?;
    }
    if failed > 0 {
        eprintln!("{failed} of {} cells produced no runs", cells.len());
    }
    Ok(failed == 0)
}
