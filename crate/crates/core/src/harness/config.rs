//! Experiment configuration files (TOML).
//!
//! ```toml
//! master_seed = 7
//! horizon = 10000
//! delta = 0.1
//! seeds = 50              # or an explicit list: [0, 3, 9]
//!
//! [instance]
//! generator = "random_tabular"   # random_tabular | lower_bound | nontrivial | file
//! num_contexts = 10
//! num_actions = 5
//! num_regressors = 50
//!
//! [learner]
//! kind = "relim"          # relim | uniform | epsilon_greedy | follow_the_leader
//! mode = "known"          # known | empirical
//! cadence = "every_round" # every_round | doubling
//!
//! [solver]
//! rel_tol = 1e-6
//!
//! [output]
//! dir = "out"
//!
//! [diag]
//! num_samples = 100000
//! ```
//!
//! Unknown keys anywhere are rejected.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::baselines::BaselineKind;
use crate::error::{Error, Result};
use crate::instances::{
    gen_lower_bound, gen_nontrivial_random, gen_random_tabular, read_instance, Instance,
    DEFAULT_EPSILON_SCALE,
};
use crate::relim::{Cadence, DistMode, LearnerConfig};
use crate::rng::{stream, Component};
use crate::solver::{SolverOptions, DEFAULT_REL_TOL};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub master_seed: u64,
    pub horizon: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_seeds")]
    pub seeds: SeedSpec,
    pub instance: InstanceSpec,
    pub learner: LearnerSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub diag: DiagSpec,
}

fn default_delta() -> f64 {
    0.1
}

fn default_seeds() -> SeedSpec {
    SeedSpec::Count(1)
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    Count(u64),
    List(Vec<u64>),
}

impl SeedSpec {
    pub fn indices(&self) -> Vec<u64> {
        match self {
            SeedSpec::Count(n) => (0..*n).collect(),
            SeedSpec::List(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceSpec {
    RandomTabular {
        num_contexts: usize,
        num_actions: usize,
        num_regressors: usize,
    },
    LowerBound {
        n_target: u64,
        num_actions: usize,
        #[serde(default = "default_epsilon_scale")]
        epsilon_scale: f64,
    },
    Nontrivial {
        num_contexts: usize,
        num_actions: usize,
        num_regressors: usize,
    },
    File {
        path: PathBuf,
    },
}

fn default_epsilon_scale() -> f64 {
    DEFAULT_EPSILON_SCALE
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeSpec {
    Known,
    Empirical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CadenceSpec {
    EveryRound,
    Doubling,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LearnerSpec {
    Relim {
        #[serde(default = "default_mode")]
        mode: ModeSpec,
        #[serde(default = "default_cadence")]
        cadence: CadenceSpec,
        #[serde(default)]
        audit: bool,
    },
    Uniform,
    EpsilonGreedy {
        #[serde(default = "default_c")]
        c: f64,
    },
    FollowTheLeader,
}

fn default_mode() -> ModeSpec {
    ModeSpec::Known
}

fn default_cadence() -> CadenceSpec {
    CadenceSpec::EveryRound
}

fn default_c() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default)]
    pub max_iters: Option<usize>,
}

fn default_rel_tol() -> f64 {
    DEFAULT_REL_TOL
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            rel_tol: DEFAULT_REL_TOL,
            max_iters: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: default_out_dir() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagActionDist {
    /// Uniform over all actions.
    Uniform,
    /// The solved exploration distribution over the full class.
    Exploration,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagSpec {
    #[serde(default = "default_num_samples")]
    pub num_samples: usize,
    /// Regressor to test; every non-truth member when absent.
    #[serde(default)]
    pub f_index: Option<usize>,
    #[serde(default = "default_diag_dist")]
    pub action_dist: DiagActionDist,
}

fn default_num_samples() -> usize {
    100_000
}

fn default_diag_dist() -> DiagActionDist {
    DiagActionDist::Exploration
}

impl Default for DiagSpec {
    fn default() -> Self {
        Self {
            num_samples: default_num_samples(),
            f_index: None,
            action_dist: default_diag_dist(),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative instance paths resolve against the
    /// file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        if let InstanceSpec::File { path: p } = &mut cfg.instance {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.seeds.indices().is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.solver.rel_tol > 0.0) {
            return Err(Error::Config("solver.rel_tol must be positive".into()));
        }
        if let LearnerSpec::EpsilonGreedy { c } = self.learner {
            BaselineKind::EpsilonGreedy { c }.validate()?;
        }
        Ok(())
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            rel_tol: self.solver.rel_tol,
            max_iters: self.solver.max_iters,
        }
    }

    pub fn learner_config(&self) -> Result<LearnerConfig> {
        let mut cfg = LearnerConfig::new(self.delta, self.horizon)?;
        cfg.solver = self.solver_options();
        if let LearnerSpec::Relim { mode, cadence, audit } = self.learner {
            cfg.dist_mode = match mode {
                ModeSpec::Known => DistMode::Known,
                ModeSpec::Empirical => DistMode::Empirical,
            };
            cfg.cadence = match cadence {
                CadenceSpec::EveryRound => Cadence::EveryRound,
                CadenceSpec::Doubling => Cadence::Doubling,
            };
            cfg.audit = audit;
        }
        Ok(cfg)
    }

    /// The instance faced by seed `seed_index`. Generated instances draw
    /// their generator seed from the instance stream of that seed.
    pub fn build_instance(&self, seed_index: u64) -> Result<Instance> {
        use rand::Rng;
        let gen_seed: u64 = stream(self.master_seed, seed_index, Component::Instance).random();
        match &self.instance {
            InstanceSpec::RandomTabular {
                num_contexts,
                num_actions,
                num_regressors,
            } => gen_random_tabular(gen_seed, *num_contexts, *num_actions, *num_regressors),
            InstanceSpec::LowerBound {
                n_target,
                num_actions,
                epsilon_scale,
            } => gen_lower_bound(gen_seed, *n_target, *num_actions, self.horizon, *epsilon_scale),
            InstanceSpec::Nontrivial {
                num_contexts,
                num_actions,
                num_regressors,
            } => gen_nontrivial_random(gen_seed, *num_contexts, *num_actions, *num_regressors),
            InstanceSpec::File { path } => read_instance(path),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
        master_seed = 3
        horizon = 100
        seeds = [1, 4]
        [instance]
        generator = "random_tabular"
        num_contexts = 2
        num_actions = 3
        num_regressors = 4
        [learner]
        kind = "relim"
        mode = "empirical"
    "#;

    #[test]
    fn parses_basic() {
        let cfg = ExperimentConfig::parse(BASIC).unwrap();
        assert_eq!(cfg.seeds.indices(), vec![1, 4]);
        assert_eq!(cfg.delta, 0.1);
        assert_eq!(cfg.learner_config().unwrap().dist_mode, DistMode::Empirical);
        assert_eq!(cfg.build_instance(1).unwrap(), cfg.build_instance(1).unwrap());
        assert_ne!(cfg.build_instance(1).unwrap(), cfg.build_instance(4).unwrap());
    }

    #[test]
    fn unknown_keys_are_errors() {
        let typo = BASIC.replace("master_seed", "master_sed");
        assert!(matches!(ExperimentConfig::parse(&typo), Err(Error::Config(_))));
        let nested = BASIC.replace("num_regressors = 4", "num_regressors = 4\nnum_regresors = 5");
        assert!(ExperimentConfig::parse(&nested).is_err());
        let learner = BASIC.replace("mode = \"empirical\"", "mode = \"empirical\"\nepsilon = 0.3");
        assert!(ExperimentConfig::parse(&learner).is_err());
        let section = format!("{BASIC}\n[solvr]\nrel_tol = 1e-3\n");
        assert!(ExperimentConfig::parse(&section).is_err());
    }

    #[test]
    fn rejects_invalid_values() {
        assert!(ExperimentConfig::parse(&BASIC.replace("seeds = [1, 4]", "seeds = []")).is_err());
        assert!(ExperimentConfig::parse(&BASIC.replace("horizon = 100", "horizon = 0")).is_err());
        assert!(ExperimentConfig::parse(&format!("delta = 1.5\n{BASIC}")).is_err());
    }

    #[test]
    fn baseline_specs() {
        let text = BASIC.replace("kind = \"relim\"\n        mode = \"empirical\"", "kind = \"epsilon_greedy\"\n c = 0.5");
        let cfg = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(cfg.learner, LearnerSpec::EpsilonGreedy { c: 0.5 });
    }
}
