//! Regressor Elimination for stochastic contextual bandits with a finite
//! regressor class, plus the instances, baselines and experiment harness
//! used to study it.
//!
//! ```
//! use relim::instances::gen_random_tabular;
//! use relim::relim::{run_episode, LearnerConfig};
//! use relim::rng::{stream, Component};
//!
//! let instance = gen_random_tabular(1, 3, 2, 4)?;
//! let cfg = LearnerConfig::new(0.1, 200)?;
//! let mut env = stream(0, 0, Component::Environment);
//! let mut rng = stream(0, 0, Component::Learner);
//! let (rounds, state) = run_episode(&instance, &cfg, &mut env, &mut rng)?;
//! assert_eq!(rounds.len(), 200);
//! assert!(state.active[instance.truth_index()]);
//! # Ok::<(), relim::Error>(())
//! ```

pub mod baselines;
pub mod error;
pub mod harness;
pub mod instances;
pub mod model;
pub mod relim;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/solver.md")]
    mod solver {}
    #[doc = include_str!("../../../book/src/elimination.md")]
    mod elimination {}
    #[doc = include_str!("../../../book/src/instances.md")]
    mod instances {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    mod baselines {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
