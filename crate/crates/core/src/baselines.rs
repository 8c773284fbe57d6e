//! Reference learners: uniform random play, follow-the-leader on the
//! regressor class, and ε-greedy around the leader.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::RegressorClass;
use crate::relim::LossTracker;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaselineKind {
    Uniform,
    /// `ε_t = min(1, c · (K ln N / t)^{1/3})`.
    EpsilonGreedy { c: f64 },
    FollowTheLeader,
}

impl BaselineKind {
    pub fn validate(&self) -> Result<()> {
        match self {
            BaselineKind::EpsilonGreedy { c } if !(*c >= 0.0 && c.is_finite()) => {
                Err(Error::input(format!("epsilon-greedy constant must be >= 0, got {c}")))
            }
            _ => Ok(()),
        }
    }
}

/// Exploration rate of ε-greedy at 1-based round `t`.
pub fn epsilon_schedule(c: f64, num_actions: usize, num_regressors: usize, t: usize) -> f64 {
    let rate = num_actions as f64 * (num_regressors as f64).ln() / t.max(1) as f64;
    (c * rate.cbrt()).min(1.0)
}

#[derive(Debug, Clone)]
pub struct Baseline<'a> {
    kind: BaselineKind,
    class: &'a RegressorClass,
    losses: LossTracker,
}

impl<'a> Baseline<'a> {
    pub fn new(kind: BaselineKind, class: &'a RegressorClass) -> Result<Self> {
        kind.validate()?;
        Ok(Self {
            kind,
            class,
            losses: LossTracker::new(class.len()),
        })
    }

    pub fn losses(&self) -> &LossTracker {
        &self.losses
    }

    fn leader_action(&self, x: usize) -> usize {
        let leader = self.losses.leader(0..self.class.len()).unwrap_or(0);
        self.class.action(leader, x)
    }

    /// Picks an action for context `x`; returns it with its propensity.
    pub fn choose<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> Result<(usize, f64)> {
        if x >= self.class.num_contexts() {
            return Err(Error::input(format!("context {x} out of range")));
        }
        let k = self.class.num_actions();
        Ok(match self.kind {
            BaselineKind::Uniform => (rng.random_range(0..k), 1.0 / k as f64),
            BaselineKind::FollowTheLeader => (self.leader_action(x), 1.0),
            BaselineKind::EpsilonGreedy { c } => {
                let eps = epsilon_schedule(c, k, self.class.len(), self.losses.t() + 1);
                let leader = self.leader_action(x);
                // one uniform draw decides explore-vs-exploit, a second picks
                // the exploratory action, so the stream use is fixed per round
                let explore = rng.random::<f64>() < eps;
                let random_action = rng.random_range(0..k);
                let a = if explore { random_action } else { leader };
                let p = eps / k as f64 + if a == leader { 1.0 - eps } else { 0.0 };
                (a, p)
            }
        })
    }

    pub fn observe(&mut self, x: usize, a: usize, reward: f64) -> Result<()> {
        self.losses.observe(self.class, x, a, reward)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::gen_random_tabular;
    use crate::model::Regressor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_frequencies() {
        let inst = gen_random_tabular(1, 2, 4, 3).unwrap();
        let b = Baseline::new(BaselineKind::Uniform, inst.regressors()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut counts = [0usize; 4];
        for _ in 0..10_000 {
            counts[b.choose(0, &mut rng).unwrap().0] += 1;
        }
        for c in counts {
            assert!((c as f64 / 10_000.0 - 0.25).abs() < 0.02);
        }
    }

    #[test]
    fn ftl_single_member() {
        let class = RegressorClass::new(vec![Regressor::new(2, 3, vec![0.1, 0.2, 0.9, 0.5, 0.1, 0.0]).unwrap()]).unwrap();
        let mut b = Baseline::new(BaselineKind::FollowTheLeader, &class).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for i in 0..20 {
            let x = i % 2;
            let (a, p) = b.choose(x, &mut rng).unwrap();
            assert_eq!(a, class.action(0, x));
            assert_eq!(p, 1.0);
            b.observe(x, a, 1.0).unwrap();
        }
    }

    #[test]
    fn epsilon_one_matches_uniform_law() {
        assert_eq!(epsilon_schedule(1.0, 4, 100, 1), 1.0);
        assert_eq!(epsilon_schedule(1.0, 4, 1, 10), 0.0);
        let inst = gen_random_tabular(2, 1, 4, 3).unwrap();
        let b = Baseline::new(BaselineKind::EpsilonGreedy { c: 1e9 }, inst.regressors()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut counts = [0usize; 4];
        for _ in 0..10_000 {
            let (a, p) = b.choose(0, &mut rng).unwrap();
            assert!((p - 0.25).abs() < 1e-12);
            counts[a] += 1;
        }
        for c in counts {
            assert!((c as f64 / 10_000.0 - 0.25).abs() < 0.02);
        }
    }

    #[test]
    fn rejects_bad_reward_and_constant() {
        let inst = gen_random_tabular(1, 1, 2, 2).unwrap();
        let mut b = Baseline::new(BaselineKind::Uniform, inst.regressors()).unwrap();
        assert!(b.observe(0, 0, -0.1).is_err());
        assert!(Baseline::new(BaselineKind::EpsilonGreedy { c: -1.0 }, inst.regressors()).is_err());
    }
}
