//! Command-line front end: configured RMSE sweeps, surface-placement
//! heatmaps, the flop-count table, and config validation.
//!
//! Exit codes: 0 on success, 2 for configuration problems, 1 for runtime
//! failures. Worker-thread count follows the `RIS_LOCATE_THREADS`
//! environment variable (default: available parallelism).

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Parser, Subcommand};

use config::{load_config, ConfigError, RunConfig};
use ris_locate::experiments::{
    complexity_report, placement_heatmap, run_sweep, ResultRow, SweepSpec,
};

const CSV_HEADER: &str = "sweep_variable,sweep_value,solver,metric,value,n_trials,n_failed,seed";

#[derive(Parser)]
#[command(
    name = "ris-locate",
    version,
    about = "Monte Carlo benchmarks for two-stage localization with a reconfigurable surface"
)]
struct Cli {
    /// INI-style configuration file (omit for the reference deployment)
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override the experiment seed
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the output directory
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured sweep; writes <prefix>_results.csv and
    /// <prefix>_summary.txt
    Run,
    /// Map position RMSE over surface placements on an n x n room lattice;
    /// writes <prefix>_heatmap.csv and <prefix>_heatmap_summary.txt
    Heatmap {
        /// Lattice points per axis
        #[arg(long, default_value_t = 11)]
        lattice: usize,
    },
    /// Print per-iteration flop estimates for all benchmark algorithms
    Complexity {
        /// Number of surface elements
        #[arg(long, default_value_t = 8)]
        elements: usize,
        /// Number of pilot subcarriers
        #[arg(long, default_value_t = 10)]
        subcarriers: usize,
        /// Number of reconfiguration blocks
        #[arg(long, default_value_t = 60)]
        blocks: usize,
    },
    /// Parse the configuration, check its invariants, and echo it resolved
    Validate,
}

enum AppError {
    Config(ConfigError),
    Runtime(anyhow::Error),
}

impl From<ConfigError> for AppError {
    fn from(e: ConfigError) -> Self {
        AppError::Config(e)
    }
}

impl From<anyhow::Error> for AppError {
    fn from(e: anyhow::Error) -> Self {
        AppError::Runtime(e)
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::Config(e)) => {
            eprintln!("configuration error: {e}");
            ExitCode::from(2)
        }
        Err(AppError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), AppError> {
    let mut cfg = load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.directory = out;
    }
    match cli.command {
        Command::Run => run(&cfg),
        Command::Heatmap { lattice } => heatmap(&cfg, lattice),
        Command::Complexity {
            elements,
            subcarriers,
            blocks,
        } => complexity(elements, subcarriers, blocks),
        Command::Validate => {
            cfg.validate()?;
            print!("{}", cfg.to_ini());
            Ok(())
        }
    }
}

/// Execute the sweep one point at a time so the summary can report honest
/// per-point wall-clock times; each point gets its own derived seed so the
/// points stay statistically independent.
fn run(cfg: &RunConfig) -> Result<(), AppError> {
    let spec = cfg.sweep_spec()?;
    fs::create_dir_all(&cfg.directory)
        .with_context(|| format!("cannot create output directory {}", cfg.directory.display()))?;
    let started = Instant::now();
    let mut rows = Vec::new();
    let mut timings = Vec::new();
    for (idx, &value) in spec.values.iter().enumerate() {
        let point = SweepSpec {
            values: vec![value],
            seed: point_seed(cfg.seed, idx),
            ..spec.clone()
        };
        let t0 = Instant::now();
        let result = run_sweep(&point)
            .map_err(anyhow::Error::new)
            .with_context(|| format!("sweep point {} = {value} failed", spec.variable.name()))?;
        timings.push((value, t0.elapsed().as_secs_f64()));
        rows.extend(result.rows);
    }
    let total = started.elapsed().as_secs_f64();

    let csv_path = output_path(cfg, "results.csv");
    write_once(&csv_path, &render_csv(spec.variable.name(), &rows, cfg.seed))?;
    let summary_path = output_path(cfg, "summary.txt");
    write_once(
        &summary_path,
        &render_summary(cfg, spec.variable.name(), &timings, total),
    )?;
    println!("wrote {}", csv_path.display());
    println!("wrote {}", summary_path.display());
    Ok(())
}

fn heatmap(cfg: &RunConfig, lattice: usize) -> Result<(), AppError> {
    cfg.validate()?;
    let scenario = cfg.scenario()?;
    fs::create_dir_all(&cfg.directory)
        .with_context(|| format!("cannot create output directory {}", cfg.directory.display()))?;
    let t0 = Instant::now();
    let result = placement_heatmap(lattice, &scenario, cfg.n_trials, cfg.seed)
        .map_err(anyhow::Error::new)
        .context("placement heatmap failed")?;
    let total = t0.elapsed().as_secs_f64();

    let csv_path = output_path(cfg, "heatmap.csv");
    write_once(&csv_path, &render_csv(&result.variable, &result.rows, cfg.seed))?;
    let summary_path = output_path(cfg, "heatmap_summary.txt");
    let mut summary = String::new();
    summary.push_str("# resolved configuration\n\n");
    summary.push_str(&cfg.to_ini());
    summary.push_str(&format!(
        "\n# heatmap\nlattice = {lattice} x {lattice}\nvalid placements = {}\nwall clock = {total:.3} s\n",
        result.rows.len()
    ));
    write_once(&summary_path, &summary)?;
    println!("wrote {}", csv_path.display());
    println!("wrote {}", summary_path.display());
    Ok(())
}

fn complexity(elements: usize, subcarriers: usize, blocks: usize) -> Result<(), AppError> {
    let rows = complexity_report(elements, subcarriers, blocks)
        .map_err(anyhow::Error::new)
        .context("complexity report failed")?;
    println!(
        "{:<10}  {:>6}  {:>13}  {:>8}  {:>19}  note",
        "algorithm", "n_ris", "n_subcarriers", "n_blocks", "flops_per_iteration"
    );
    for row in rows {
        println!(
            "{:<10}  {:>6}  {:>13}  {:>8}  {:>19}  {}",
            row.algorithm.name(),
            row.n_ris,
            row.n_subcarriers,
            row.n_blocks,
            row.flops,
            row.note
        );
    }
    Ok(())
}

fn output_path(cfg: &RunConfig, suffix: &str) -> PathBuf {
    cfg.directory.join(format!("{}_{suffix}", cfg.prefix))
}

/// Each output file is rendered fully in memory and written exactly once.
fn write_once(path: &Path, contents: &str) -> Result<(), AppError> {
    fs::write(path, contents)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(AppError::from)
}

fn point_seed(master: u64, idx: usize) -> u64 {
    master.wrapping_add((idx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn render_csv(variable: &str, rows: &[ResultRow], seed: u64) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&format!(
            "{},{:.8e},{},{},{:.8e},{},{},{}\n",
            variable,
            row.sweep_value,
            row.solver.name(),
            row.metric.name(),
            row.value,
            row.n_trials,
            row.n_failed,
            seed
        ));
    }
    out
}

fn render_summary(
    cfg: &RunConfig,
    variable: &str,
    timings: &[(f64, f64)],
    total: f64,
) -> String {
    let mut out = String::new();
    out.push_str("# resolved configuration\n\n");
    out.push_str(&cfg.to_ini());
    out.push_str("\n# wall clock per sweep point\n");
    for (value, secs) in timings {
        out.push_str(&format!(
            "{variable} = {value}: {secs:.3} s ({} trials x {} solvers)\n",
            cfg.n_trials,
            cfg.solvers.len()
        ));
    }
    out.push_str(&format!("total: {total:.3} s\n"));
    out
}
