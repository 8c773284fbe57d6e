//! Tabular domain types: contexts, actions, regressors and the policies
//! they induce.
//!
//! Contexts and actions are dense indices. A regressor is a dense
//! `num_contexts × num_actions` table of predicted mean rewards in `[0, 1]`,
//! and its induced policy picks the highest-valued action in each context,
//! breaking ties toward the lowest action index.

use crate::error::{Error, Result};
use crate::instances::Instance;

/// Tolerance on the context weights summing to one.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// The action set `0..num_actions`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionSpace {
    num_actions: usize,
}

impl ActionSpace {
    pub fn new(num_actions: usize) -> Result<Self> {
        if num_actions < 2 {
            return Err(Error::input(format!(
                "need at least 2 actions, got {num_actions}"
            )));
        }
        Ok(Self { num_actions })
    }

    pub fn len(&self) -> usize {
        self.num_actions
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// A finite context set together with its (known) sampling distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextSpace {
    weights: Vec<f64>,
}

impl ContextSpace {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::input("context space must be nonempty"));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::input(format!("invalid context weight {w}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::input(format!(
                "context weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { weights })
    }

    pub fn uniform(num_contexts: usize) -> Result<Self> {
        if num_contexts == 0 {
            return Err(Error::input("context space must be nonempty"));
        }
        Self::new(vec![1.0 / num_contexts as f64; num_contexts])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// A reward predictor `f(x, a)` stored as a row-major table.
#[derive(Debug, Clone, PartialEq)]
pub struct Regressor {
    num_contexts: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl Regressor {
    pub fn new(num_contexts: usize, num_actions: usize, values: Vec<f64>) -> Result<Self> {
        if num_contexts == 0 || num_actions == 0 {
            return Err(Error::input("regressor table must be nonempty"));
        }
        if values.len() != num_contexts * num_actions {
            return Err(Error::input(format!(
                "regressor table has {} entries, expected {}x{}",
                values.len(),
                num_contexts,
                num_actions
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::input(format!(
                "regressor value {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            num_contexts,
            num_actions,
            values,
        })
    }

    /// Builds a regressor from one row of predictions per context.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let num_actions = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != num_actions) {
            return Err(Error::input("ragged regressor rows"));
        }
        Self::new(rows.len(), num_actions, rows.concat())
    }

    #[inline]
    pub fn value(&self, x: usize, a: usize) -> f64 {
        self.values[x * self.num_actions + a]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.values[x * self.num_actions..(x + 1) * self.num_actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn num_contexts(&self) -> usize {
        self.num_contexts
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }
}

/// The induced action `π_f(x)`: the first maximizer of `f(x, ·)`.
pub fn argmax_action(f: &Regressor, x: usize) -> Result<usize> {
    if x >= f.num_contexts {
        return Err(Error::input(format!(
            "context {x} out of range (have {})",
            f.num_contexts
        )));
    }
    Ok(first_argmax(f.row(x)))
}

pub(crate) fn first_argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (a, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = a;
        }
    }
    best
}

/// An ordered, nonempty set of regressors with their induced policies
/// precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorClass {
    members: Vec<Regressor>,
    // argmax_policy[i * num_contexts + x]
    argmax_policy: Vec<usize>,
}

impl RegressorClass {
    pub fn new(members: Vec<Regressor>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::input("regressor class must be nonempty"))?;
        let (nx, na) = (first.num_contexts, first.num_actions);
        if members
            .iter()
            .any(|f| f.num_contexts != nx || f.num_actions != na)
        {
            return Err(Error::input("regressors have mismatched table shapes"));
        }
        let argmax_policy = members
            .iter()
            .flat_map(|f| (0..nx).map(move |x| first_argmax(f.row(x))))
            .collect();
        Ok(Self {
            members,
            argmax_policy,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[Regressor] {
        &self.members
    }

    pub fn get(&self, i: usize) -> &Regressor {
        &self.members[i]
    }

    pub fn num_contexts(&self) -> usize {
        self.members[0].num_contexts
    }

    pub fn num_actions(&self) -> usize {
        self.members[0].num_actions
    }

    /// The induced policy of member `i`, one action per context.
    pub fn policy(&self, i: usize) -> &[usize] {
        let nx = self.num_contexts();
        &self.argmax_policy[i * nx..(i + 1) * nx]
    }

    #[inline]
    pub fn action(&self, i: usize, x: usize) -> usize {
        self.argmax_policy[i * self.num_contexts() + x]
    }
}

/// `A(F', x)`: the sorted set of actions chosen in context `x` by some
/// member of `subset` (indices into `class`).
pub fn active_actions(class: &RegressorClass, subset: &[usize], x: usize) -> Result<Vec<usize>> {
    if subset.is_empty() {
        return Err(Error::input("active_actions needs a nonempty regressor subset"));
    }
    if x >= class.num_contexts() {
        return Err(Error::input(format!("context {x} out of range")));
    }
    let mut seen = vec![false; class.num_actions()];
    for &i in subset {
        if i >= class.len() {
            return Err(Error::input(format!("regressor index {i} out of range")));
        }
        seen[class.action(i, x)] = true;
    }
    Ok(seen
        .iter()
        .enumerate()
        .filter_map(|(a, &s)| s.then_some(a))
        .collect())
}

/// One interaction round as seen by the learner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundLog {
    /// 1-based round index.
    pub t: usize,
    pub context: usize,
    pub action: usize,
    pub reward: f64,
    pub instant_regret: f64,
}

/// `R̂(f)`: mean squared error of `f` on the observed `(x, a, r)` triples.
pub fn avg_squared_loss(history: &[RoundLog], f: &Regressor) -> Result<f64> {
    if history.is_empty() {
        return Err(Error::input("avg_squared_loss needs a nonempty history"));
    }
    let total: f64 = history
        .iter()
        .map(|r| {
            let e = f.value(r.context, r.action) - r.reward;
            e * e
        })
        .sum();
    Ok(total / history.len() as f64)
}

/// Exact expected per-round regret of always playing `π_f`:
/// `E_x[f*(x, π_{f*}(x)) − f*(x, π_f(x))]`.
pub fn expected_instant_regret(instance: &Instance, f: &Regressor) -> f64 {
    let truth = instance.truth();
    instance
        .contexts()
        .weights()
        .iter()
        .enumerate()
        .map(|(x, &w)| {
            let best = truth.value(x, first_argmax(truth.row(x)));
            w * (best - truth.value(x, first_argmax(f.row(x))))
        })
        .sum()
}
