//! Realizable bandit instances and their generators.
//!
//! An [`Instance`] is the full simulated world: the context distribution,
//! the action set, the regressor class, and the index of the member whose
//! table equals the true mean reward. Rewards are Bernoulli draws with those
//! means, so realizability holds by construction.
//!
//! Three generators are provided:
//!
//! * [`gen_random_tabular`]: i.i.d. uniform tables, truth picked at random.
//! * [`gen_lower_bound`]: every mapping `g: X → A` on `M` contexts, encoded
//!   as `f_g(x, a) = 1/2 + ε` when `a = g(x)` and `1/2` otherwise.
//! * [`gen_nontrivial`]: for a given policy set, the "badly predicting"
//!   regressors whose squared error against the truth is at least `1/20`
//!   on every context-action pair.

mod format;

pub use format::{read_instance, write_instance, parse_instance, render_instance};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{first_argmax, ActionSpace, ContextSpace, Regressor, RegressorClass};

/// Largest regressor class the lower-bound generator will materialize.
pub const MAX_LOWER_BOUND_CLASS: u64 = 1_000_000;

/// Default multiplier on `sqrt(K·M/T)` for the lower-bound gap.
pub const DEFAULT_EPSILON_SCALE: f64 = 0.25;

/// Minimum gap between the best and second-best mean in each context of a
/// nontriviality base table.
pub const NONTRIVIAL_MARGIN: f64 = 0.01;

/// Squared-error floor every non-truth member of a nontriviality instance
/// must clear on every `(x, a)`.
pub const NONTRIVIAL_GAP: f64 = 1.0 / 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardKind {
    Bernoulli,
}

impl RewardKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RewardKind::Bernoulli => "bernoulli",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    contexts: ContextSpace,
    actions: ActionSpace,
    regressors: RegressorClass,
    truth_index: usize,
    reward_kind: RewardKind,
}

impl Instance {
    pub fn new(
        contexts: ContextSpace,
        regressors: RegressorClass,
        truth_index: usize,
    ) -> Result<Self> {
        if regressors.num_contexts() != contexts.len() {
            return Err(Error::input(format!(
                "regressors cover {} contexts but the context space has {}",
                regressors.num_contexts(),
                contexts.len()
            )));
        }
        if truth_index >= regressors.len() {
            return Err(Error::input(format!(
                "truth index {truth_index} out of range for {} regressors",
                regressors.len()
            )));
        }
        let actions = ActionSpace::new(regressors.num_actions())?;
        Ok(Self {
            contexts,
            actions,
            regressors,
            truth_index,
            reward_kind: RewardKind::Bernoulli,
        })
    }

    pub fn contexts(&self) -> &ContextSpace {
        &self.contexts
    }

    pub fn actions(&self) -> ActionSpace {
        self.actions
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn num_contexts(&self) -> usize {
        self.contexts.len()
    }

    pub fn regressors(&self) -> &RegressorClass {
        &self.regressors
    }

    pub fn truth_index(&self) -> usize {
        self.truth_index
    }

    pub fn reward_kind(&self) -> RewardKind {
        self.reward_kind
    }

    /// `f*`, which is also the mean reward table.
    pub fn truth(&self) -> &Regressor {
        self.regressors.get(self.truth_index)
    }

    #[inline]
    pub fn mean(&self, x: usize, a: usize) -> f64 {
        self.truth().value(x, a)
    }

    /// `f*(x, π_{f*}(x)) − f*(x, a)`.
    #[inline]
    pub fn instant_regret(&self, x: usize, a: usize) -> f64 {
        let truth = self.truth();
        truth.value(x, self.regressors.action(self.truth_index, x)) - truth.value(x, a)
    }

    /// Checks that rewards are generated from the truth member's table.
    ///
    /// Every instance built through [`Instance::new`] satisfies this; the
    /// audit exists for instances read back from disk and for tests.
    pub fn audit_realizability(&self) -> Result<()> {
        let truth = self.truth();
        for x in 0..self.num_contexts() {
            for a in 0..self.num_actions() {
                let m = self.mean(x, a);
                if m.to_bits() != truth.value(x, a).to_bits() || !(0.0..=1.0).contains(&m) {
                    return Err(Error::Internal(format!(
                        "reward mean at ({x}, {a}) is not the truth table entry"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Draws one round: a context from the context distribution and an
    /// independent Bernoulli reward for every action.
    ///
    /// The full vector is always drawn so that the random stream advances by
    /// the same amount regardless of which action the learner reads.
    pub fn sample_round<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, Vec<f64>) {
        let x = sample_index(self.contexts.weights(), rng);
        let rewards = self
            .truth()
            .row(x)
            .iter()
            .map(|&m| if rng.random::<f64>() < m { 1.0 } else { 0.0 })
            .collect();
        (x, rewards)
    }
}

/// Samples an index from a probability vector by inversion.
pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Random realizable instance with uniform `[0, 1]` tables.
pub fn gen_random_tabular(
    seed: u64,
    num_contexts: usize,
    num_actions: usize,
    num_regressors: usize,
) -> Result<Instance> {
    if num_regressors < 2 || num_actions < 2 || num_contexts < 1 {
        return Err(Error::input(format!(
            "random tabular instance needs N >= 2, K >= 2, |X| >= 1 \
             (got N={num_regressors}, K={num_actions}, |X|={num_contexts})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = num_contexts * num_actions;
    let members = (0..num_regressors)
        .map(|_| {
            let values = (0..size).map(|_| rng.random::<f64>()).collect();
            Regressor::new(num_contexts, num_actions, values)
        })
        .collect::<Result<Vec<_>>>()?;
    let truth = rng.random_range(0..num_regressors);
    Instance::new(
        ContextSpace::uniform(num_contexts)?,
        RegressorClass::new(members)?,
        truth,
    )
}

/// Parameters of the lower-bound family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerBoundParams {
    pub n_target: u64,
    pub num_actions: usize,
    pub horizon: usize,
    pub epsilon: f64,
    /// Number of contexts: the largest `M` with `K^M <= n_target`.
    pub num_contexts: usize,
}

impl LowerBoundParams {
    pub fn new(n_target: u64, num_actions: usize, horizon: usize, epsilon_scale: f64) -> Result<Self> {
        if num_actions < 2 {
            return Err(Error::input("lower-bound instance needs K >= 2"));
        }
        if n_target < num_actions as u64 {
            return Err(Error::input(format!(
                "lower-bound instance needs N >= K (got N={n_target}, K={num_actions})"
            )));
        }
        if !(epsilon_scale > 0.0 && epsilon_scale.is_finite()) {
            return Err(Error::input(format!("epsilon scale must be positive, got {epsilon_scale}")));
        }
        let k = num_actions as u64;
        let mut m = 0usize;
        let mut size = 1u64;
        while let Some(next) = size.checked_mul(k).filter(|&s| s <= n_target) {
            size = next;
            m += 1;
        }
        if m > horizon {
            return Err(Error::input(format!(
                "lower-bound instance needs ln N / ln K <= T (M={m}, T={horizon})"
            )));
        }
        if size > MAX_LOWER_BOUND_CLASS {
            return Err(Error::Capacity(format!(
                "K^M = {size} regressors exceeds the cap of {MAX_LOWER_BOUND_CLASS}"
            )));
        }
        let epsilon = (epsilon_scale * ((num_actions * m) as f64 / horizon as f64).sqrt()).min(0.5);
        Ok(Self {
            n_target,
            num_actions,
            horizon,
            epsilon,
            num_contexts: m,
        })
    }

    pub fn class_size(&self) -> usize {
        self.num_actions.pow(self.num_contexts as u32)
    }
}

/// Decodes regressor index `i` of the lower-bound class into its mapping
/// `g`, with context `x` as base-`K` digit `x` (least significant first).
pub fn lower_bound_mapping(i: usize, num_actions: usize, num_contexts: usize) -> Vec<usize> {
    let mut rest = i;
    (0..num_contexts)
        .map(|_| {
            let a = rest % num_actions;
            rest /= num_actions;
            a
        })
        .collect()
}

/// The lower-bound family: all `K^M` mappings on `M` uniformly weighted
/// contexts, with a uniformly chosen truth.
pub fn gen_lower_bound(
    seed: u64,
    n_target: u64,
    num_actions: usize,
    horizon: usize,
    epsilon_scale: f64,
) -> Result<Instance> {
    let params = LowerBoundParams::new(n_target, num_actions, horizon, epsilon_scale)?;
    let (m, k, eps) = (params.num_contexts, num_actions, params.epsilon);
    let members = (0..params.class_size())
        .map(|i| {
            let g = lower_bound_mapping(i, k, m);
            let mut values = vec![0.5; m * k];
            for (x, &a) in g.iter().enumerate() {
                values[x * k + a] = 0.5 + eps;
            }
            Regressor::new(m, k, values)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = rng.random_range(0..members.len());
    Instance::new(
        ContextSpace::uniform(m)?,
        RegressorClass::new(members)?,
        truth,
    )
}

/// A mean reward table with its context distribution: the input world for
/// the nontriviality construction.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanTable {
    pub contexts: ContextSpace,
    pub means: Regressor,
}

impl MeanTable {
    /// The optimal action in each context.
    pub fn optimal_policy(&self) -> Vec<usize> {
        (0..self.contexts.len())
            .map(|x| first_argmax(self.means.row(x)))
            .collect()
    }

    fn check_margin(&self) -> Result<()> {
        for x in 0..self.contexts.len() {
            let row = self.means.row(x);
            let best = first_argmax(row);
            let runner_up = row
                .iter()
                .enumerate()
                .filter(|&(a, _)| a != best)
                .map(|(_, &v)| v)
                .fold(f64::NEG_INFINITY, f64::max);
            if row[best] - runner_up < NONTRIVIAL_MARGIN {
                return Err(Error::input(format!(
                    "context {x}: optimal action must lead by at least {NONTRIVIAL_MARGIN} \
                     (gap {})",
                    row[best] - runner_up
                )));
            }
        }
        Ok(())
    }
}

/// Value of a non-truth regressor on the action its policy selects.
pub fn nontrivial_chosen_value(mean: f64) -> f64 {
    if mean > 0.75 {
        0.51
    } else {
        1.0
    }
}

/// Value of a non-truth regressor on an action its policy does not select.
pub fn nontrivial_other_value(mean: f64) -> f64 {
    if mean > 0.25 {
        0.0
    } else {
        0.5
    }
}

/// Builds a class realizing exactly `policies` in which the truth is the
/// mean table and every other member mispredicts every entry by a constant.
///
/// Members appear in the order of `policies`; the truth sits at the position
/// of the optimal policy.
pub fn gen_nontrivial(base: &MeanTable, policies: &[Vec<usize>]) -> Result<Instance> {
    let nx = base.contexts.len();
    let k = base.means.num_actions();
    if base.means.num_contexts() != nx {
        return Err(Error::input("mean table and context space disagree on |X|"));
    }
    base.check_margin()?;
    for (i, p) in policies.iter().enumerate() {
        if p.len() != nx || p.iter().any(|&a| a >= k) {
            return Err(Error::input(format!("policy {i} is not a map from {nx} contexts to {k} actions")));
        }
        if policies[..i].contains(p) {
            return Err(Error::input(format!("policy {i} duplicates an earlier policy")));
        }
    }
    let optimal = base.optimal_policy();
    let truth_index = policies
        .iter()
        .position(|p| *p == optimal)
        .ok_or_else(|| Error::input("policy set does not contain the optimal policy"))?;

    let members = policies
        .iter()
        .enumerate()
        .map(|(i, policy)| {
            if i == truth_index {
                return Ok(base.means.clone());
            }
            let mut values = Vec::with_capacity(nx * k);
            for (x, &chosen) in policy.iter().enumerate() {
                for a in 0..k {
                    let m = base.means.value(x, a);
                    values.push(if a == chosen {
                        nontrivial_chosen_value(m)
                    } else {
                        nontrivial_other_value(m)
                    });
                }
            }
            Regressor::new(nx, k, values)
        })
        .collect::<Result<Vec<_>>>()?;
    let class = RegressorClass::new(members)?;

    for (i, policy) in policies.iter().enumerate() {
        if class.policy(i) != policy.as_slice() {
            return Err(Error::Construction(format!(
                "regressor {i} does not induce its target policy"
            )));
        }
        if i == truth_index {
            continue;
        }
        let f = class.get(i);
        for x in 0..nx {
            for a in 0..k {
                let d = f.value(x, a) - base.means.value(x, a);
                if d * d < NONTRIVIAL_GAP {
                    return Err(Error::Construction(format!(
                        "regressor {i} at ({x}, {a}) is within the 1/20 squared gap of the truth"
                    )));
                }
            }
        }
    }
    Instance::new(base.contexts.clone(), class, truth_index)
}

/// Draws a random base table (uniform contexts, unique optimal action with
/// margin) plus `num_regressors − 1` distinct non-optimal random policies,
/// then applies [`gen_nontrivial`].
pub fn gen_nontrivial_random(
    seed: u64,
    num_contexts: usize,
    num_actions: usize,
    num_regressors: usize,
) -> Result<Instance> {
    if num_actions < 2 || num_contexts < 1 || num_regressors < 1 {
        return Err(Error::input("nontrivial instance needs K >= 2, |X| >= 1, N >= 1"));
    }
    let total_policies = (num_actions as f64).powi(num_contexts as i32);
    if (num_regressors as f64) > total_policies {
        return Err(Error::input(format!(
            "only {total_policies} distinct policies exist for |X|={num_contexts}, K={num_actions}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(num_contexts);
    for _ in 0..num_contexts {
        loop {
            let row: Vec<f64> = (0..num_actions).map(|_| rng.random::<f64>()).collect();
            let mut sorted = row.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            if sorted[0] - sorted[1] >= NONTRIVIAL_MARGIN {
                rows.push(row);
                break;
            }
        }
    }
    let base = MeanTable {
        contexts: ContextSpace::uniform(num_contexts)?,
        means: Regressor::from_rows(&rows)?,
    };
    let optimal = base.optimal_policy();
    let mut policies = vec![optimal];
    while policies.len() < num_regressors {
        let p: Vec<usize> = (0..num_contexts)
            .map(|_| rng.random_range(0..num_actions))
            .collect();
        if !policies.contains(&p) {
            policies.push(p);
        }
    }
    // place the truth at a random position
    policies.shuffle(&mut rng);
    gen_nontrivial(&base, &policies)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{active_actions, expected_instant_regret};

    #[test]
    fn random_tabular_is_seed_deterministic() {
        let a = gen_random_tabular(1, 1, 2, 2).unwrap();
        let b = gen_random_tabular(1, 1, 2, 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.regressors().len(), 2);
        assert_ne!(a, gen_random_tabular(2, 1, 2, 2).unwrap());
        let c = gen_random_tabular(1, 10, 4, 20).unwrap();
        assert!(c.truth_index() < 20);
        c.audit_realizability().unwrap();
        assert!(gen_random_tabular(1, 10, 4, 1).is_err());
        assert!(gen_random_tabular(1, 0, 4, 3).is_err());
    }

    #[test]
    fn lower_bound_sizes() {
        let inst = gen_lower_bound(3, 8, 2, 100, DEFAULT_EPSILON_SCALE).unwrap();
        assert_eq!(inst.num_contexts(), 3);
        assert_eq!(inst.regressors().len(), 8);
        let p = LowerBoundParams::new(64, 4, 16000, 0.25).unwrap();
        assert_eq!(p.num_contexts, 3);
        // exact powers must not be lost to floating-point logs
        assert_eq!(LowerBoundParams::new(1000, 10, 10, 0.25).unwrap().num_contexts, 3);
        assert_eq!(LowerBoundParams::new(999, 10, 10, 0.25).unwrap().num_contexts, 2);
    }

    #[test]
    fn lower_bound_values_and_regret() {
        let inst = gen_lower_bound(5, 27, 3, 50, 0.25).unwrap();
        let eps = 0.25 * (9.0f64 / 50.0).sqrt();
        let class = inst.regressors();
        let all: Vec<usize> = (0..class.len()).collect();
        for x in 0..inst.num_contexts() {
            assert_eq!(active_actions(class, &all, x).unwrap(), vec![0, 1, 2]);
        }
        let g_star = lower_bound_mapping(inst.truth_index(), 3, 3);
        for i in 0..class.len() {
            let f = class.get(i);
            let g = lower_bound_mapping(i, 3, 3);
            for x in 0..3 {
                for a in 0..3 {
                    let want = if a == g[x] { 0.5 + eps } else { 0.5 };
                    assert_eq!(f.value(x, a), want);
                }
            }
            let disagree = g.iter().zip(&g_star).filter(|(a, b)| a != b).count();
            let r = expected_instant_regret(&inst, f);
            assert!((r - eps * disagree as f64 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn lower_bound_guards() {
        assert!(matches!(
            gen_lower_bound(0, 1 << 21, 2, 100, 0.25),
            Err(Error::Capacity(_))
        ));
        assert!(gen_lower_bound(0, 64, 4, 2, 0.25).is_err());
        assert!(gen_lower_bound(0, 3, 4, 100, 0.25).is_err());
        let wide = LowerBoundParams::new(4, 2, 1, 10.0);
        assert!(wide.is_err());
        assert_eq!(LowerBoundParams::new(4, 2, 2, 10.0).unwrap().epsilon, 0.5);
    }

    #[test]
    fn nontrivial_threshold_values() {
        assert_eq!(nontrivial_chosen_value(0.8), 0.51);
        assert_eq!(nontrivial_chosen_value(0.75), 1.0);
        assert_eq!(nontrivial_other_value(0.1), 0.5);
        assert_eq!(nontrivial_other_value(0.25), 0.5);
        assert_eq!(nontrivial_other_value(0.26), 0.0);
        let gap = (0.8f64 - 0.51).powi(2);
        assert!((gap - 0.0841).abs() < 1e-15 && gap >= NONTRIVIAL_GAP);
    }

    #[test]
    fn nontrivial_construction() {
        let base = MeanTable {
            contexts: ContextSpace::uniform(2).unwrap(),
            means: Regressor::from_rows(&[vec![0.8, 0.1], vec![0.3, 0.6]]).unwrap(),
        };
        let policies = vec![vec![1, 0], vec![0, 1], vec![1, 1]];
        let inst = gen_nontrivial(&base, &policies).unwrap();
        assert_eq!(inst.truth_index(), 1);
        let f = inst.regressors().get(0);
        // context 0: chosen action 1 has mean 0.1 -> 1.0; other action mean 0.8 -> 0
        assert_eq!(f.row(0), &[0.0, 1.0]);
        // context 1: chosen action 0 has mean 0.3 -> 1.0; other mean 0.6 -> 0
        assert_eq!(f.row(1), &[1.0, 0.0]);
        let g = inst.regressors().get(2);
        assert_eq!(g.row(0), &[0.0, 1.0]);
        assert_eq!(g.row(1), &[0.0, 1.0]);

        let missing = vec![vec![1, 0], vec![1, 1]];
        assert!(matches!(gen_nontrivial(&base, &missing), Err(Error::Input(_))));
        let tied = MeanTable {
            contexts: ContextSpace::uniform(1).unwrap(),
            means: Regressor::from_rows(&[vec![0.5, 0.495]]).unwrap(),
        };
        assert!(gen_nontrivial(&tied, &[vec![0]]).is_err());
    }

    #[test]
    fn nontrivial_random_gap_is_exhaustive() {
        for seed in 0..20 {
            let inst = gen_nontrivial_random(seed, 6, 3, 20).unwrap();
            assert_eq!(inst.regressors().len(), 20);
            let truth = inst.truth();
            for (i, f) in inst.regressors().members().iter().enumerate() {
                if i == inst.truth_index() {
                    continue;
                }
                let min_gap = f
                    .values()
                    .iter()
                    .zip(truth.values())
                    .map(|(a, b)| (a - b) * (a - b))
                    .fold(f64::INFINITY, f64::min);
                assert!(min_gap >= NONTRIVIAL_GAP);
            }
        }
    }

    #[test]
    fn sampling_degenerate_and_mean() {
        let ones = Instance::new(
            ContextSpace::uniform(1).unwrap(),
            RegressorClass::new(vec![Regressor::new(1, 3, vec![1.0; 3]).unwrap()]).unwrap(),
            0,
        )
        .unwrap();
        let zeros = Instance::new(
            ContextSpace::uniform(1).unwrap(),
            RegressorClass::new(vec![Regressor::new(1, 3, vec![0.0; 3]).unwrap()]).unwrap(),
            0,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            assert_eq!(ones.sample_round(&mut rng).1, vec![1.0; 3]);
            assert_eq!(zeros.sample_round(&mut rng).1, vec![0.0; 3]);
        }
        let half = Instance::new(
            ContextSpace::uniform(1).unwrap(),
            RegressorClass::new(vec![Regressor::new(1, 2, vec![0.5; 2]).unwrap()]).unwrap(),
            0,
        )
        .unwrap();
        let n = 100_000;
        let hits: f64 = (0..n).map(|_| half.sample_round(&mut rng).1[0]).sum();
        assert!((hits / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn context_sampling_follows_weights() {
        let inst = Instance::new(
            ContextSpace::new(vec![0.2, 0.0, 0.8]).unwrap(),
            RegressorClass::new(vec![Regressor::new(3, 2, vec![0.5; 6]).unwrap()]).unwrap(),
            0,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut counts = [0usize; 3];
        for _ in 0..50_000 {
            counts[inst.sample_round(&mut rng).0] += 1;
        }
        assert_eq!(counts[1], 0);
        assert!((counts[0] as f64 / 50_000.0 - 0.2).abs() < 0.006);
    }
}
