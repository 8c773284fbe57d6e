//! Multi-seed experiment execution and CSV output.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{Baseline, BaselineKind};
use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, LearnerSpec};
use crate::instances::Instance;
use crate::model::RoundLog;
use crate::relim::{run_episode, EpisodeRound, LearnerConfig};
use crate::rng::{stream, Component};

/// One CSV row of a per-seed run file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub t: usize,
    pub context: usize,
    pub action: usize,
    pub propensity: f64,
    pub reward: f64,
    pub instant_regret: f64,
    pub cum_regret: f64,
    pub n_active: usize,
    pub solver_iters: usize,
    pub solver_violation: f64,
}

/// Everything one seed produced.
#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    pub records: Vec<RunRecord>,
    /// Whether the truth regressor is still active at the end (Regressor
    /// Elimination only).
    pub truth_active: Option<bool>,
    /// Round of the last elimination, 0 if none (Regressor Elimination only).
    pub last_elimination_round: Option<usize>,
    /// Worst audited relative constraint violation, when auditing is on.
    pub audit_max_rel_violation: Option<f64>,
}

impl SeedOutcome {
    pub fn cum_regret_at(&self, t: usize) -> f64 {
        if t == 0 {
            0.0
        } else {
            self.records[t - 1].cum_regret
        }
    }

    pub fn final_cum_regret(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.cum_regret)
    }
}

fn to_records(seed: u64, rounds: &[EpisodeRound]) -> Vec<RunRecord> {
    let mut cum = 0.0;
    rounds
        .iter()
        .map(|r| {
            cum += r.log.instant_regret;
            RunRecord {
                seed,
                t: r.log.t,
                context: r.log.context,
                action: r.log.action,
                propensity: r.propensity,
                reward: r.log.reward,
                instant_regret: r.log.instant_regret,
                cum_regret: cum,
                n_active: r.n_active,
                solver_iters: r.solver_iters,
                solver_violation: r.solver_violation,
            }
        })
        .collect()
}

fn run_baseline(
    instance: &Instance,
    kind: BaselineKind,
    horizon: usize,
    env: &mut crate::rng::StreamRng,
    rng: &mut crate::rng::StreamRng,
) -> Result<Vec<EpisodeRound>> {
    let mut learner = Baseline::new(kind, instance.regressors())?;
    let n = instance.regressors().len();
    (1..=horizon)
        .map(|t| {
            let (x, rewards) = instance.sample_round(env);
            let (a, propensity) = learner.choose(x, rng)?;
            learner.observe(x, a, rewards[a])?;
            Ok(EpisodeRound {
                log: RoundLog {
                    t,
                    context: x,
                    action: a,
                    reward: rewards[a],
                    instant_regret: instance.instant_regret(x, a),
                },
                propensity,
                n_active: n,
                solver_iters: 0,
                solver_violation: 0.0,
            })
        })
        .collect()
}

/// Runs the configured learner on one seed's instance.
pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedOutcome> {
    let instance = config.build_instance(seed)?;
    run_seed_on(config, &instance, seed)
}

/// Like [`run_seed`] but on a caller-provided instance.
pub fn run_seed_on(config: &ExperimentConfig, instance: &Instance, seed: u64) -> Result<SeedOutcome> {
    let mut env = stream(config.master_seed, seed, Component::Environment);
    let mut rng = stream(config.master_seed, seed, Component::Learner);
    let horizon = config.horizon;
    let kind = match config.learner {
        LearnerSpec::Relim { .. } => None,
        LearnerSpec::Uniform => Some(BaselineKind::Uniform),
        LearnerSpec::EpsilonGreedy { c } => Some(BaselineKind::EpsilonGreedy { c }),
        LearnerSpec::FollowTheLeader => Some(BaselineKind::FollowTheLeader),
    };
    match kind {
        Some(kind) => {
            let rounds = run_baseline(instance, kind, horizon, &mut env, &mut rng)?;
            Ok(SeedOutcome {
                seed,
                records: to_records(seed, &rounds),
                truth_active: None,
                last_elimination_round: None,
                audit_max_rel_violation: None,
            })
        }
        None => {
            let learner_cfg: LearnerConfig = config.learner_config()?;
            let (rounds, state) = run_episode(instance, &learner_cfg, &mut env, &mut rng)?;
            Ok(SeedOutcome {
                seed,
                records: to_records(seed, &rounds),
                truth_active: Some(state.active[instance.truth_index()]),
                last_elimination_round: Some(state.last_elimination_round),
                audit_max_rel_violation: learner_cfg.audit.then_some(state.audit_max_rel_violation),
            })
        }
    }
}

/// Checkpoints at which the summary reports cumulative regret.
pub fn checkpoints(horizon: usize) -> [(&'static str, usize); 4] {
    [
        ("T/8", (horizon / 8).max(1)),
        ("T/4", (horizon / 4).max(1)),
        ("T/2", (horizon / 2).max(1)),
        ("T", horizon),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointSummary {
    pub label: &'static str,
    pub t: usize,
    pub n_seeds: usize,
    pub mean_cum_regret: f64,
    pub median_cum_regret: f64,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Mean and median cumulative regret at the standard checkpoints over the
/// successful seeds, in seed order.
pub fn summarize(horizon: usize, outcomes: &[SeedOutcome]) -> Vec<CheckpointSummary> {
    checkpoints(horizon)
        .iter()
        .map(|&(label, t)| {
            let values: Vec<f64> = outcomes.iter().map(|o| o.cum_regret_at(t)).collect();
            let mean = if values.is_empty() {
                f64::NAN
            } else {
                values.iter().sum::<f64>() / values.len() as f64
            };
            CheckpointSummary {
                label,
                t,
                n_seeds: values.len(),
                mean_cum_regret: mean,
                median_cum_regret: median(&values),
            }
        })
        .collect()
}

/// Result of [`run_experiment`].
#[derive(Debug)]
pub struct ExperimentOutput {
    pub outcomes: Vec<SeedOutcome>,
    pub failures: Vec<(u64, Error)>,
    pub summary: Vec<CheckpointSummary>,
    pub files: Vec<PathBuf>,
}

pub fn seed_file_name(seed: u64) -> String {
    format!("seed_{seed:05}.csv")
}

pub fn write_records(path: &Path, records: &[RunRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

fn write_summary(path: &Path, summary: &[CheckpointSummary], failures: &[(u64, Error)]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "checkpoint,t,n_seeds,mean_cum_regret,median_cum_regret").map_err(io)?;
    for s in summary {
        writeln!(
            out,
            "{},{},{},{:.6},{:.6}",
            s.label, s.t, s.n_seeds, s.mean_cum_regret, s.median_cum_regret
        )
        .map_err(io)?;
    }
    for (seed, err) in failures {
        writeln!(out, "# seed {seed} failed: {err}").map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Runs every configured seed (concurrently, on `jobs` threads), writes one
/// CSV per seed plus `summary.csv` into `out_dir`.
///
/// A seed whose learner fails is recorded in the summary and skipped; the
/// remaining seeds still run.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path, jobs: usize) -> Result<ExperimentOutput> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let seeds = config.seeds.indices();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Internal(e.to_string()))?;
    let results: Vec<(u64, Result<(SeedOutcome, PathBuf)>)> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let res = run_seed(config, seed).and_then(|outcome| {
                    let path = out_dir.join(seed_file_name(seed));
                    write_records(&path, &outcome.records)?;
                    Ok((outcome, path))
                });
                (seed, res)
            })
            .collect()
    });

    let mut outcomes = Vec::new();
    let mut files = Vec::new();
    let mut failures = Vec::new();
    for (seed, res) in results {
        match res {
            Ok((outcome, path)) => {
                outcomes.push(outcome);
                files.push(path);
            }
            // output problems abort the run; learner problems are per-seed
            Err(e @ Error::Io { .. }) => return Err(e),
            Err(e) => failures.push((seed, e)),
        }
    }
    let summary = summarize(config.horizon, &outcomes);
    let summary_path = out_dir.join("summary.csv");
    write_summary(&summary_path, &summary, &failures)?;
    files.push(summary_path);
    Ok(ExperimentOutput {
        outcomes,
        failures,
        summary,
        files,
    })
}
