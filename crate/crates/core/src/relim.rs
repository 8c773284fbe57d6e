//! Regressor Elimination.
//!
//! Each round the learner
//!
//! 1. finds an exploration distribution over the surviving regressors that
//!    satisfies the inverse-propensity constraint (against the known context
//!    distribution, or the empirical distribution of past contexts),
//! 2. samples an action from the smoothed induced distribution `P'(· | x)`,
//! 3. records the squared prediction error of every regressor on the
//!    observed reward, and
//! 4. drops every regressor whose average loss exceeds the current minimum
//!    by `18 ln(1/δ_t) / t`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::instances::Instance;
use crate::model::{RegressorClass, RoundLog};
use crate::solver::{
    naive_inverse_propensities, solve_exploration_dist, ExplorationDist, PolicyTable, SolveReport,
    SolverOptions,
};

/// Smoothing mass `μ = min(1/(2K), 1/√T)`.
pub fn mu_value(num_actions: usize, horizon: usize) -> f64 {
    (1.0 / (2.0 * num_actions as f64)).min(1.0 / (horizon as f64).sqrt())
}

/// Per-round confidence `δ / (2 N t³ log₂ t)`, with `log₂ t` floored at 1 so
/// round 1 is defined.
pub fn delta_t(delta: f64, num_regressors: usize, t: usize) -> f64 {
    let t_f = t as f64;
    delta / (2.0 * num_regressors as f64 * t_f * t_f * t_f * t_f.max(2.0).log2())
}

/// Elimination radius `18 ln(1/δ_t) / t`.
pub fn elimination_radius(t: usize, delta_t: f64) -> f64 {
    18.0 * (1.0 / delta_t).ln() / t as f64
}

/// Which context distribution the exploration constraint is solved against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistMode {
    /// The instance's context weights.
    Known,
    /// The uniform distribution over previously observed contexts.
    Empirical,
}

/// When the elimination step runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cadence {
    EveryRound,
    /// Only at rounds `t = 1, 2, 4, 8, ...`.
    Doubling,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    pub delta: f64,
    pub horizon: usize,
    pub dist_mode: DistMode,
    pub cadence: Cadence,
    pub solver: SolverOptions,
    /// Recheck each round's distribution against the constraint with an
    /// independent computation and record the worst relative violation.
    pub audit: bool,
}

impl LearnerConfig {
    pub fn new(delta: f64, horizon: usize) -> Result<Self> {
        let cfg = Self {
            delta,
            horizon,
            dist_mode: DistMode::Known,
            cadence: Cadence::EveryRound,
            solver: SolverOptions::default(),
            audit: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_mode(mut self, mode: DistMode) -> Self {
        self.dist_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::input(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if self.horizon < 1 {
            return Err(Error::input("horizon must be at least 1"));
        }
        Ok(())
    }
}

/// Cumulative squared losses of every regressor in a class.
///
/// Shared by Regressor Elimination and the baselines so that both see
/// identical loss accounting for identical `(x, a, r)` streams.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTracker {
    cum_sq_loss: Vec<f64>,
    t: usize,
}

impl LossTracker {
    pub fn new(num_regressors: usize) -> Self {
        Self {
            cum_sq_loss: vec![0.0; num_regressors],
            t: 0,
        }
    }

    pub fn observe(&mut self, class: &RegressorClass, x: usize, a: usize, reward: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&reward) {
            return Err(Error::input(format!("reward {reward} outside [0, 1]")));
        }
        if x >= class.num_contexts() || a >= class.num_actions() {
            return Err(Error::input(format!("observation ({x}, {a}) out of range")));
        }
        for (loss, f) in self.cum_sq_loss.iter_mut().zip(class.members()) {
            let e = f.value(x, a) - reward;
            *loss += e * e;
        }
        self.t += 1;
        Ok(())
    }

    /// Rounds observed so far.
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn cum_sq_loss(&self) -> &[f64] {
        &self.cum_sq_loss
    }

    /// `R̂_t(f)`; zero before any observation.
    pub fn avg_loss(&self, i: usize) -> f64 {
        if self.t == 0 {
            0.0
        } else {
            self.cum_sq_loss[i] / self.t as f64
        }
    }

    /// Index of the lowest average loss among `candidates` (lowest index on
    /// ties).
    pub fn leader(&self, candidates: impl IntoIterator<Item = usize>) -> Option<usize> {
        let mut best: Option<usize> = None;
        for i in candidates {
            if best.is_none_or(|b| self.cum_sq_loss[i] < self.cum_sq_loss[b]) {
                best = Some(i);
            }
        }
        best
    }
}

/// Mutable learner state for one episode.
#[derive(Debug, Clone)]
pub struct LearnerState {
    /// `F_t` as a mask over the class.
    pub active: Vec<bool>,
    pub losses: LossTracker,
    /// Contexts seen so far (empirical mode only).
    pub history_contexts: Vec<usize>,
    /// Per-context counts of `history_contexts`.
    history_counts: Vec<usize>,
    /// Members covered by `current_dist`, in class order.
    dist_members: Vec<usize>,
    pub current_dist: Option<ExplorationDist>,
    /// Report of the solve for the current round (zero iterations when the
    /// previous distribution was reused).
    pub last_report: Option<SolveReport>,
    /// Worst audited relative violation over all rounds.
    pub audit_max_rel_violation: f64,
    dist_stale: bool,
    /// Round at which the last regressor was eliminated (0 if none).
    pub last_elimination_round: usize,
}

impl LearnerState {
    pub fn active_indices(&self) -> Vec<usize> {
        self.active
            .iter()
            .enumerate()
            .filter_map(|(i, &a)| a.then_some(i))
            .collect()
    }

    pub fn n_active(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn t(&self) -> usize {
        self.losses.t()
    }
}

/// Regressor Elimination over a fixed regressor class.
#[derive(Debug, Clone)]
pub struct RegressorElimination<'a> {
    class: &'a RegressorClass,
    context_weights: &'a [f64],
    config: LearnerConfig,
    mu: f64,
    state: LearnerState,
}

impl<'a> RegressorElimination<'a> {
    pub fn new(instance: &'a Instance, config: LearnerConfig) -> Result<Self> {
        config.validate()?;
        let class = instance.regressors();
        let n = class.len();
        Ok(Self {
            class,
            context_weights: instance.contexts().weights(),
            mu: mu_value(class.num_actions(), config.horizon),
            config,
            state: LearnerState {
                active: vec![true; n],
                losses: LossTracker::new(n),
                history_contexts: Vec::new(),
                history_counts: vec![0; class.num_contexts()],
                dist_members: Vec::new(),
                current_dist: None,
                last_report: None,
                audit_max_rel_violation: f64::NEG_INFINITY,
                dist_stale: true,
                last_elimination_round: 0,
            },
        })
    }

    pub fn state(&self) -> &LearnerState {
        &self.state
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Context weights the current round's constraint is posed against, or
    /// `None` when empirical mode has no history yet.
    fn constraint_weights(&self) -> Option<Vec<f64>> {
        match self.config.dist_mode {
            DistMode::Known => Some(self.context_weights.to_vec()),
            DistMode::Empirical => {
                let seen = self.state.history_contexts.len();
                (seen > 0).then(|| {
                    self.state
                        .history_counts
                        .iter()
                        .map(|&c| c as f64 / seen as f64)
                        .collect()
                })
            }
        }
    }

    /// Step 1: make `current_dist` valid for the current round.
    fn prepare_distribution(&mut self) -> Result<()> {
        let needs_solve = self.state.dist_stale || self.config.dist_mode == DistMode::Empirical;
        if !needs_solve {
            if let Some(r) = self.state.last_report.as_mut() {
                r.iterations = 0;
            }
            return Ok(());
        }
        let members = self.state.active_indices();
        let table = PolicyTable::from_class(self.class, &members)?;
        let warm: Option<Vec<f64>> = self.state.current_dist.as_ref().map(|d| {
            members
                .iter()
                .map(|i| {
                    self.state
                        .dist_members
                        .binary_search(i)
                        .map_or(0.0, |pos| d.probs()[pos])
                })
                .collect()
        });
        let (dist, report) = match self.constraint_weights() {
            Some(weights) => {
                let (dist, report) = solve_exploration_dist(
                    &table,
                    &weights,
                    self.mu,
                    &self.config.solver,
                    warm.as_deref(),
                )?;
                if self.config.audit {
                    let inv = naive_inverse_propensities(dist.probs(), &table, &weights, self.mu);
                    let worst = inv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let rel = (worst - report.bound) / report.bound;
                    self.state.audit_max_rel_violation = self.state.audit_max_rel_violation.max(rel);
                }
                (dist, report)
            }
            None => {
                let dist = ExplorationDist::uniform(&table, self.mu);
                let report = SolveReport {
                    iterations: 0,
                    final_violation: 0.0,
                    bound: 0.0,
                    tolerance: 0.0,
                    converged: true,
                    violation_trace: Vec::new(),
                };
                (dist, report)
            }
        };
        self.state.current_dist = Some(dist);
        self.state.last_report = Some(report);
        self.state.dist_members = members;
        self.state.dist_stale = false;
        Ok(())
    }

    /// Steps 1–2: returns the sampled action and its propensity `P'(a | x)`.
    pub fn choose_action<R: Rng + ?Sized>(&mut self, x: usize, rng: &mut R) -> Result<(usize, f64)> {
        if x >= self.class.num_contexts() {
            return Err(Error::input(format!("context {x} out of range")));
        }
        self.prepare_distribution()?;
        let dist = self
            .state
            .current_dist
            .as_ref()
            .ok_or_else(|| Error::Internal("no exploration distribution".into()))?;
        Ok(dist.sample(x, rng))
    }

    /// Step 3: record the squared error of every regressor on `(x, a, r)`.
    pub fn observe(&mut self, x: usize, a: usize, reward: f64) -> Result<()> {
        self.state.losses.observe(self.class, x, a, reward)?;
        if self.config.dist_mode == DistMode::Empirical {
            self.state.history_contexts.push(x);
            self.state.history_counts[x] += 1;
        }
        Ok(())
    }

    /// Step 4: deactivate regressors whose average loss is at least the
    /// active minimum plus the elimination radius. Returns how many were
    /// removed.
    pub fn eliminate(&mut self) -> Result<usize> {
        let t = self.state.t();
        if t == 0 {
            return Err(Error::input("eliminate called before any observation"));
        }
        if self.config.cadence == Cadence::Doubling && !t.is_power_of_two() {
            return Ok(0);
        }
        let n = self.class.len();
        let radius = elimination_radius(t, delta_t(self.config.delta, n, t));
        let losses = &self.state.losses;
        let best = losses
            .leader(self.state.active_indices())
            .ok_or_else(|| Error::Internal("active set is empty".into()))?;
        let threshold = losses.avg_loss(best) + radius;
        let mut removed = 0;
        for i in 0..n {
            if self.state.active[i] && i != best && losses.avg_loss(i) >= threshold {
                self.state.active[i] = false;
                removed += 1;
            }
        }
        if removed > 0 {
            self.state.dist_stale = true;
            self.state.last_elimination_round = t;
        }
        Ok(removed)
    }
}

/// One executed round with the learner-side diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRound {
    pub log: RoundLog,
    pub propensity: f64,
    /// Active regressors after this round's elimination step.
    pub n_active: usize,
    pub solver_iters: usize,
    pub solver_violation: f64,
}

/// Runs `config.horizon` rounds of Regressor Elimination.
///
/// `env_rng` drives contexts and rewards, `learner_rng` drives action
/// sampling; keeping them separate lets different learners face the same
/// context and reward sequence.
pub fn run_episode<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    instance: &Instance,
    config: &LearnerConfig,
    env_rng: &mut R1,
    learner_rng: &mut R2,
) -> Result<(Vec<EpisodeRound>, LearnerState)> {
    let mut learner = RegressorElimination::new(instance, config.clone())?;
    let mut rounds = Vec::with_capacity(config.horizon);
    for t in 1..=config.horizon {
        let (x, rewards) = instance.sample_round(env_rng);
        let (a, propensity) = learner.choose_action(x, learner_rng)?;
        let report = learner.state.last_report.as_ref();
        let (solver_iters, solver_violation) =
            report.map_or((0, 0.0), |r| (r.iterations, r.final_violation));
        learner.observe(x, a, rewards[a])?;
        learner.eliminate()?;
        rounds.push(EpisodeRound {
            log: RoundLog {
                t,
                context: x,
                action: a,
                reward: rewards[a],
                instant_regret: instance.instant_regret(x, a),
            },
            propensity,
            n_active: learner.state.n_active(),
            solver_iters,
            solver_violation,
        });
    }
    Ok((rounds, learner.state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::gen_random_tabular;
    use crate::model::{avg_squared_loss, ContextSpace, Regressor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mu_examples() {
        assert_eq!(mu_value(2, 16), 0.25);
        assert!((mu_value(5, 4) - 0.1).abs() < 1e-15);
        assert!((mu_value(2, 10_000) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn delta_t_examples() {
        assert!((delta_t(0.2, 4, 4) - 1.953125e-4).abs() < 1e-18);
        assert!((delta_t(0.1, 10, 2) - 6.25e-4).abs() < 1e-18);
        assert!((delta_t(0.1, 10, 1) - 5e-3).abs() < 1e-18);
    }

    #[test]
    fn radius_examples() {
        let r = elimination_radius(100, 1e-4);
        assert!((r - 18.0 * 10_000f64.ln() / 100.0).abs() < 1e-12);
        assert!((r - 1.657861).abs() < 1e-6);
        assert!((elimination_radius(1000, 1e-4) - 0.1657861).abs() < 1e-7);
        assert!(elimination_radius(10, 1.0 - 1e-12) < 1e-9);
    }

    fn two_way(values: &[[f64; 2]]) -> Instance {
        let members = values
            .iter()
            .map(|v| Regressor::new(1, 2, v.to_vec()).unwrap())
            .collect();
        Instance::new(
            ContextSpace::uniform(1).unwrap(),
            RegressorClass::new(members).unwrap(),
            0,
        )
        .unwrap()
    }

    #[test]
    fn single_regressor_plays_its_policy() {
        let inst = two_way(&[[0.2, 0.7]]);
        let mut learner = RegressorElimination::new(&inst, LearnerConfig::new(0.1, 100).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            assert_eq!(learner.choose_action(0, &mut rng).unwrap(), (1, 1.0));
        }
    }

    #[test]
    fn disagreeing_pair_splits_evenly() {
        let inst = two_way(&[[0.6, 0.4], [0.4, 0.6]]);
        let mut learner =
            RegressorElimination::new(&inst, LearnerConfig::new(0.1, 10_000).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let draws = 10_000;
        let mut ones = 0;
        for _ in 0..draws {
            let (a, p) = learner.choose_action(0, &mut rng).unwrap();
            assert!(p >= learner.mu() / 2.0);
            ones += a;
        }
        assert!((ones as f64 / draws as f64 - 0.5).abs() < 0.02);
    }

    #[test]
    fn observe_accounting() {
        let inst = gen_random_tabular(3, 3, 3, 5).unwrap();
        let cfg = LearnerConfig::new(0.1, 100).unwrap().with_mode(DistMode::Empirical);
        let mut learner = RegressorElimination::new(&inst, cfg).unwrap();
        let mut env = ChaCha8Rng::seed_from_u64(3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut history = Vec::new();
        for t in 1..=40 {
            let (x, r) = inst.sample_round(&mut env);
            let (a, _) = learner.choose_action(x, &mut rng).unwrap();
            learner.observe(x, a, r[a]).unwrap();
            history.push(RoundLog { t, context: x, action: a, reward: r[a], instant_regret: 0.0 });
        }
        assert_eq!(learner.state().history_contexts.len(), 40);
        for (i, f) in inst.regressors().members().iter().enumerate() {
            let direct = avg_squared_loss(&history, f).unwrap();
            assert!((learner.state().losses.avg_loss(i) - direct).abs() < 1e-14);
        }
        assert!(learner.observe(0, 0, 1.5).is_err());
    }

    #[test]
    fn perfect_predictions_add_nothing() {
        let inst = two_way(&[[1.0, 0.0], [1.0, 0.0]]);
        let mut learner = RegressorElimination::new(&inst, LearnerConfig::new(0.1, 10).unwrap()).unwrap();
        learner.observe(0, 0, 1.0).unwrap();
        learner.observe(0, 1, 0.0).unwrap();
        assert_eq!(learner.state().losses.cum_sq_loss(), &[0.0, 0.0]);
    }

    #[test]
    fn elimination_rule() {
        // three regressors; losses driven by hand
        let inst = Instance::new(
            ContextSpace::uniform(1).unwrap(),
            RegressorClass::new(vec![
                Regressor::new(1, 2, vec![0.9, 0.1]).unwrap(),
                Regressor::new(1, 2, vec![0.8, 0.2]).unwrap(),
                Regressor::new(1, 2, vec![0.1, 0.9]).unwrap(),
            ])
            .unwrap(),
            0,
        )
        .unwrap();
        let mut learner = RegressorElimination::new(&inst, LearnerConfig::new(0.5, 10).unwrap()).unwrap();
        learner.observe(0, 0, 1.0).unwrap();
        // radius at t = 1 is far above 1, nothing can go
        assert_eq!(learner.eliminate().unwrap(), 0);
        assert_eq!(learner.state().n_active(), 3);

        let equal = two_way(&[[0.5, 0.5], [0.5, 0.5]]);
        let mut learner = RegressorElimination::new(&equal, LearnerConfig::new(0.1, 10).unwrap()).unwrap();
        for _ in 0..10 {
            learner.observe(0, 0, 1.0).unwrap();
            assert_eq!(learner.eliminate().unwrap(), 0);
        }
    }

    #[test]
    fn elimination_threshold_arithmetic() {
        // R̂ = (0.10, 0.20, 0.50) with radius 0.25 keeps the first two
        let avg = [0.10, 0.20, 0.50];
        let radius = 0.25;
        let min = avg.iter().copied().fold(f64::INFINITY, f64::min);
        let survivors: Vec<usize> = (0..3).filter(|&i| avg[i] < min + radius).collect();
        assert_eq!(survivors, vec![0, 1]);
    }

    #[test]
    fn single_member_has_no_regret() {
        let inst = two_way(&[[0.3, 0.6]]);
        let cfg = LearnerConfig::new(0.1, 200).unwrap();
        let (rounds, state) = run_episode(
            &inst,
            &cfg,
            &mut ChaCha8Rng::seed_from_u64(5),
            &mut ChaCha8Rng::seed_from_u64(6),
        )
        .unwrap();
        assert!(rounds.iter().all(|r| r.log.instant_regret == 0.0 && r.propensity == 1.0));
        assert_eq!(state.n_active(), 1);
    }
}
