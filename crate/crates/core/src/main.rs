use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use relim::harness::config::{ExperimentConfig, SeedSpec};
use relim::harness::diag::{run_diagnostics, write_diag_rows};
use relim::harness::{emit_plot_data, run_experiment};
use relim::instances::write_instance;
use relim::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "relim", version, about = "Regressor Elimination contextual-bandit simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run seeds 0..n instead of the configured seeds.
    #[arg(long)]
    seeds: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the instance of each seed to `instance_NNNNN.txt`.
    Gen(Common),
    /// Run the configured learner; writes per-seed CSVs and summary.csv.
    Run {
        #[command(flatten)]
        common: Common,
        /// Worker threads (default: all cores). Output does not depend on it.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Monte Carlo checks of the excess-loss identities; writes diag.csv.
    Diag(Common),
    /// Aggregate per-seed CSVs in RUN_DIR into plot_data.csv.
    PlotData {
        run_dir: PathBuf,
        /// Directory for plot_data.csv (default: RUN_DIR).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = ExperimentConfig::from_file(&common.config)?;
    if let Some(n) = common.seeds {
        cfg.seeds = SeedSpec::Count(n);
    }
    cfg.validate()?;
    let out = common.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    std::fs::create_dir_all(&out).map_err(|e| Error::Input(format!("{}: {e}", out.display())))?;
    Ok((cfg, out))
}

fn gen(common: &Common) -> Result<()> {
    let (cfg, out) = load(common)?;
    for seed in cfg.seeds.indices() {
        let path = out.join(format!("instance_{seed:05}.txt"));
        write_instance(&path, &cfg.build_instance(seed)?)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn run(common: &Common, jobs: Option<usize>) -> Result<()> {
    let (cfg, out) = load(common)?;
    let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let result = run_experiment(&cfg, &out, jobs)?;
    for s in &result.summary {
        println!(
            "{:>4} t={:<8} seeds={:<4} mean={:.4} median={:.4}",
            s.label, s.t, s.n_seeds, s.mean_cum_regret, s.median_cum_regret
        );
    }
    for (seed, err) in &result.failures {
        eprintln!("seed {seed} failed: {err}");
    }
    // a run where every seed failed has nothing to report
    match result.failures.into_iter().next() {
        Some((_, err)) if result.outcomes.is_empty() => Err(err),
        _ => Ok(()),
    }
}

fn diag(common: &Common) -> Result<()> {
    let (cfg, out) = load(common)?;
    let rows = run_diagnostics(&cfg)?;
    let path = out.join("diag.csv");
    write_diag_rows(&path, &rows)?;
    let flagged = rows
        .iter()
        .filter(|r| r.report.identity_flag || r.report.variance_flag || r.report.transfer_flag)
        .count();
    println!("{} checks, {flagged} flagged; report in {}", rows.len(), path.display());
    Ok(())
}

fn plot_data(run_dir: &Path, out: Option<&Path>) -> Result<()> {
    let out_dir = out.unwrap_or(run_dir);
    std::fs::create_dir_all(out_dir).map_err(|e| Error::Input(format!("{}: {e}", out_dir.display())))?;
    let path = out_dir.join("plot_data.csv");
    let n = emit_plot_data(run_dir, &path)?;
    println!("{n} rows written to {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Gen(c) => gen(c),
        Command::Run { common, jobs } => run(common, *jobs),
        Command::Diag(c) => diag(c),
        Command::PlotData { run_dir, out } => plot_data(run_dir, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input() { 1 } else { 2 })
        }
    }
}
