//! Monte Carlo checks of the regression-to-regret identities.
//!
//! For a regressor `f` and the truth `f*`, with `x ∼ D`, `a ∼ p(· | x)` and
//! `r ∼ D(r | x)` independent of `a` given `x`, the excess squared loss
//!
//! ```text
//! Y = (f(x, a) − r(a))² − (f*(x, a) − r(a))²
//! ```
//!
//! has mean `E[(f(x, a) − f*(x, a))²]` and variance at most `4 E[Y]`. When
//! `p` keeps `E_x[1 / p(π_g(x) | x)] ≤ K` for `g ∈ {f, f*}`, the squared
//! expected regret of `π_f` is at most `2K E[Y]`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::harness::config::{DiagActionDist, ExperimentConfig};
use crate::instances::{sample_index, Instance};
use crate::model::first_argmax;
use crate::relim::mu_value;
use crate::rng::{stream, Component};
use crate::solver::{solve_exploration_dist, ExplorationDist, PolicyTable};

/// Smallest sample size accepted by the diagnostics.
pub const MIN_DIAG_SAMPLES: usize = 1000;

/// Flag threshold in standard errors.
pub const FLAG_SIGMAS: f64 = 3.0;

/// Relative slack allowed when auditing the `E_x[1/p] ≤ K` precondition.
pub const AUDIT_REL_TOL: f64 = 1e-6;

/// A conditional action distribution `p(a | x)` as a dense table.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionTable {
    num_actions: usize,
    probs: Vec<f64>,
}

impl ActionTable {
    pub fn new(num_contexts: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != num_contexts * num_actions {
            return Err(Error::input("action table has the wrong shape"));
        }
        for row in probs.chunks(num_actions) {
            let s: f64 = row.iter().sum();
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (s - 1.0).abs() > 1e-9 {
                return Err(Error::input("action table rows must be probability vectors"));
            }
        }
        Ok(Self { num_actions, probs })
    }

    pub fn uniform(num_contexts: usize, num_actions: usize) -> Self {
        Self {
            num_actions,
            probs: vec![1.0 / num_actions as f64; num_contexts * num_actions],
        }
    }

    pub fn from_exploration(dist: &ExplorationDist, num_contexts: usize) -> Result<Self> {
        let k = dist.action_dist(0).len();
        let probs = (0..num_contexts)
            .flat_map(|x| dist.action_dist(x).iter().copied())
            .collect();
        Self::new(num_contexts, k, probs)
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.probs[x * self.num_actions..(x + 1) * self.num_actions]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagReport {
    pub num_samples: usize,
    pub mean_y: f64,
    pub se_y: f64,
    pub mean_sq_gap: f64,
    pub se_sq_gap: f64,
    pub var_y: f64,
    /// Standard error of the sample variance of `Y`.
    pub se_var_y: f64,
    /// `(E_x[f*(x, π_{f*}(x)) − f*(x, π_f(x))])²`, exact.
    pub regret_sq: f64,
    /// `2K · mean_y`.
    pub transfer_rhs: f64,
    /// `|mean_y − mean_sq_gap|` beyond 3 combined standard errors.
    pub identity_flag: bool,
    /// `var_y` above `4 · mean_y` by more than 3 standard errors.
    pub variance_flag: bool,
    /// `regret_sq` above `2K · mean_y` by more than 3 standard errors.
    /// Only evaluated by [`diag_lemma4`].
    pub transfer_flag: bool,
}

struct Moments {
    mean: f64,
    var: f64,
    m4: f64,
    n: f64,
}

impl Moments {
    fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let (mut s2, mut s4) = (0.0, 0.0);
        for v in values {
            let d = v - mean;
            s2 += d * d;
            s4 += d * d * d * d;
        }
        Self {
            mean,
            var: s2 / (n - 1.0),
            m4: s4 / n,
            n,
        }
    }

    fn se_mean(&self) -> f64 {
        (self.var / self.n).sqrt()
    }

    fn se_var(&self) -> f64 {
        ((self.m4 - self.var * self.var).max(0.0) / self.n).sqrt()
    }
}

fn exact_regret_sq(instance: &Instance, f_index: usize) -> f64 {
    let truth = instance.truth();
    let f = instance.regressors().get(f_index);
    let gap: f64 = instance
        .contexts()
        .weights()
        .iter()
        .enumerate()
        .map(|(x, &w)| {
            w * (truth.value(x, first_argmax(truth.row(x))) - truth.value(x, first_argmax(f.row(x))))
        })
        .sum();
    gap * gap
}

fn sample_report<R: Rng + ?Sized>(
    instance: &Instance,
    f_index: usize,
    actions: &ActionTable,
    num_samples: usize,
    rng: &mut R,
) -> Result<DiagReport> {
    if num_samples < MIN_DIAG_SAMPLES {
        return Err(Error::input(format!(
            "need at least {MIN_DIAG_SAMPLES} samples, got {num_samples}"
        )));
    }
    if f_index >= instance.regressors().len() {
        return Err(Error::input(format!("regressor index {f_index} out of range")));
    }
    if actions.num_actions != instance.num_actions()
        || actions.probs.len() != instance.num_contexts() * instance.num_actions()
    {
        return Err(Error::input("action table does not match the instance"));
    }
    let f = instance.regressors().get(f_index);
    let truth = instance.truth();
    let mut ys = Vec::with_capacity(num_samples);
    let mut gaps = Vec::with_capacity(num_samples);
    for _ in 0..num_samples {
        let x = sample_index(instance.contexts().weights(), rng);
        let a = sample_index(actions.row(x), rng);
        let r = if rng.random::<f64>() < truth.value(x, a) { 1.0 } else { 0.0 };
        let (fv, tv) = (f.value(x, a), truth.value(x, a));
        ys.push((fv - r) * (fv - r) - (tv - r) * (tv - r));
        gaps.push((fv - tv) * (fv - tv));
    }
    let y = Moments::of(&ys);
    let g = Moments::of(&gaps);
    let combined_se = (y.se_mean().powi(2) + g.se_mean().powi(2)).sqrt();
    let var_slack = FLAG_SIGMAS * (4.0 * y.se_mean() + y.se_var());
    let k2 = 2.0 * instance.num_actions() as f64;
    Ok(DiagReport {
        num_samples,
        mean_y: y.mean,
        se_y: y.se_mean(),
        mean_sq_gap: g.mean,
        se_sq_gap: g.se_mean(),
        var_y: y.var,
        se_var_y: y.se_var(),
        regret_sq: exact_regret_sq(instance, f_index),
        transfer_rhs: k2 * y.mean,
        identity_flag: (y.mean - g.mean).abs() > FLAG_SIGMAS * combined_se,
        variance_flag: y.var > 4.0 * y.mean + var_slack,
        transfer_flag: false,
    })
}

/// Estimates `E[Y]`, `E[(f − f*)²]` and `Var[Y]` under `actions` and flags
/// departures from the mean identity and the variance bound.
pub fn diag_lemma3<R: Rng + ?Sized>(
    instance: &Instance,
    f_index: usize,
    actions: &ActionTable,
    num_samples: usize,
    rng: &mut R,
) -> Result<DiagReport> {
    sample_report(instance, f_index, actions, num_samples, rng)
}

/// `E_x[1 / p(π_g(x) | x)]` for regressor `g`.
pub fn inverse_propensity(instance: &Instance, g_index: usize, actions: &ActionTable) -> f64 {
    let class = instance.regressors();
    instance
        .contexts()
        .weights()
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(x, &w)| w / actions.row(x)[class.action(g_index, x)])
        .sum()
}

/// Checks the regret transfer inequality for `f` under `actions`, after
/// auditing that `actions` keeps inverse propensities of `f` and `f*` within
/// `K`.
pub fn diag_lemma4<R: Rng + ?Sized>(
    instance: &Instance,
    f_index: usize,
    actions: &ActionTable,
    num_samples: usize,
    rng: &mut R,
) -> Result<DiagReport> {
    if f_index >= instance.regressors().len() {
        return Err(Error::input(format!("regressor index {f_index} out of range")));
    }
    let k = instance.num_actions() as f64;
    for (name, g) in [("f", f_index), ("f*", instance.truth_index())] {
        let ip = inverse_propensity(instance, g, actions);
        if !(ip <= k * (1.0 + AUDIT_REL_TOL)) {
            return Err(Error::input(format!(
                "exploration distribution violates E_x[1/p(pi_{name}(x)|x)] <= K: {ip} > {k}"
            )));
        }
    }
    let mut report = sample_report(instance, f_index, actions, num_samples, rng)?;
    report.transfer_flag = report.regret_sq > report.transfer_rhs + FLAG_SIGMAS * report.se_y * 2.0 * k;
    Ok(report)
}

/// The action table a diagnostics run samples from.
pub fn config_action_table(config: &ExperimentConfig, instance: &Instance) -> Result<ActionTable> {
    let (nx, k) = (instance.num_contexts(), instance.num_actions());
    match config.diag.action_dist {
        DiagActionDist::Uniform => Ok(ActionTable::uniform(nx, k)),
        DiagActionDist::Exploration => {
            let all: Vec<usize> = (0..instance.regressors().len()).collect();
            let table = PolicyTable::from_class(instance.regressors(), &all)?;
            let mu = mu_value(k, config.horizon);
            let (dist, _) = solve_exploration_dist(
                &table,
                instance.contexts().weights(),
                mu,
                &config.solver_options(),
                None,
            )?;
            ActionTable::from_exploration(&dist, nx)
        }
    }
}

/// One line of a diagnostics report file.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagRow {
    pub seed: u64,
    pub f_index: usize,
    pub report: DiagReport,
}

/// Runs both checks for the configured regressor(s) on every seed's
/// instance. A failed propensity audit is reported as an error.
pub fn run_diagnostics(config: &ExperimentConfig) -> Result<Vec<DiagRow>> {
    let mut rows = Vec::new();
    for seed in config.seeds.indices() {
        let instance = config.build_instance(seed)?;
        let actions = config_action_table(config, &instance)?;
        let targets: Vec<usize> = match config.diag.f_index {
            Some(f) => vec![f],
            None => (0..instance.regressors().len())
                .filter(|&f| f != instance.truth_index())
                .collect(),
        };
        let mut rng = stream(config.master_seed, seed, Component::Diagnostics);
        for f_index in targets {
            let report = diag_lemma4(&instance, f_index, &actions, config.diag.num_samples, &mut rng)?;
            rows.push(DiagRow { seed, f_index, report });
        }
    }
    Ok(rows)
}

pub fn write_diag_rows(path: &Path, rows: &[DiagRow]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(
        w,
        "seed,f_index,num_samples,mean_y,se_y,mean_sq_gap,se_sq_gap,var_y,se_var_y,regret_sq,transfer_rhs,identity_flag,variance_flag,transfer_flag"
    )
    .map_err(io)?;
    for DiagRow { seed, f_index, report: r } in rows {
        writeln!(
            w,
            "{seed},{f_index},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{},{},{}",
            r.num_samples,
            r.mean_y,
            r.se_y,
            r.mean_sq_gap,
            r.se_sq_gap,
            r.var_y,
            r.se_var_y,
            r.regret_sq,
            r.transfer_rhs,
            r.identity_flag,
            r.variance_flag,
            r.transfer_flag
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}
