//! The exploration distribution over surviving regressors.
//!
//! Given active regressors `F'`, a context distribution `w` and a smoothing
//! mass `μ`, a distribution `P` on `F'` induces the action distribution
//!
//! ```text
//! P'(a | x) = (1 − μ) · Σ_{f : π_f(x) = a} P(f) + μ / |A(F', x)|   for a ∈ A(F', x)
//! ```
//!
//! and zero elsewhere. We need `P` such that every active policy's action is
//! played often enough:
//!
//! ```text
//! for all f ∈ F':   E_x[1 / P'(π_f(x) | x)]  ≤  E_x[|A(F', x)|]
//! ```
//!
//! The solver maximizes the concave potential
//!
//! ```text
//! Ψ(P) = E_x[ Σ_{a ∈ A(F', x)} ln P'(a | x) ]
//! ```
//!
//! over the simplex. Its partial derivative in `P(f)` is
//! `(1 − μ) · E_x[1 / P'(π_f(x) | x)]`, so at the maximizer every such value
//! is at most the `P`-weighted average `E_x[Σ_a P̃(a|x) / P'(a|x)]`, and that
//! average is at most `E_x[|A(F', x)|]` because `p ↦ p / ((1 − μ) p + μ / k)`
//! is concave. The maximizer therefore satisfies the constraint, and the
//! solver follows the log-barrier central path with damped Newton steps until
//! the largest violation drops below the tolerance.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::instances::sample_index;
use crate::model::RegressorClass;

/// Default relative tolerance: the allowed violation is this times
/// `E_x[|A(F', x)|]`.
pub const DEFAULT_REL_TOL: f64 = 1e-6;

/// Default iteration cap `50 · n · ln(n + 1)`.
pub fn default_max_iters(num_active: usize) -> usize {
    let n = num_active as f64;
    (50.0 * n * (n + 1.0).ln()).ceil() as usize
}

/// The induced policies of a subset of a regressor class.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    num_contexts: usize,
    num_actions: usize,
    // actions[i * num_contexts + x]
    actions: Vec<usize>,
}

impl PolicyTable {
    pub fn new(num_contexts: usize, num_actions: usize, policies: &[Vec<usize>]) -> Result<Self> {
        if policies.is_empty() {
            return Err(Error::input("exploration solver needs at least one regressor"));
        }
        if policies
            .iter()
            .any(|p| p.len() != num_contexts || p.iter().any(|&a| a >= num_actions))
        {
            return Err(Error::input("policy table has the wrong shape"));
        }
        Ok(Self {
            num_contexts,
            num_actions,
            actions: policies.concat(),
        })
    }

    /// Policies of `class` members listed in `subset`, in that order.
    pub fn from_class(class: &RegressorClass, subset: &[usize]) -> Result<Self> {
        if subset.is_empty() {
            return Err(Error::input("exploration solver needs at least one regressor"));
        }
        let mut actions = Vec::with_capacity(subset.len() * class.num_contexts());
        for &i in subset {
            if i >= class.len() {
                return Err(Error::input(format!("regressor index {i} out of range")));
            }
            actions.extend_from_slice(class.policy(i));
        }
        Ok(Self {
            num_contexts: class.num_contexts(),
            num_actions: class.num_actions(),
            actions,
        })
    }

    pub fn len(&self) -> usize {
        self.actions.len() / self.num_contexts
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn num_contexts(&self) -> usize {
        self.num_contexts
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn action(&self, i: usize, x: usize) -> usize {
        self.actions[i * self.num_contexts + x]
    }

    /// Indicator table of `A(F', x)` for one context.
    fn active_mask(&self, x: usize) -> Vec<bool> {
        let mut mask = vec![false; self.num_actions];
        for i in 0..self.len() {
            mask[self.action(i, x)] = true;
        }
        mask
    }

    /// `E_x[|A(F', x)|]`, the right-hand side of the constraint.
    pub fn bound(&self, weights: &[f64]) -> f64 {
        weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(x, &w)| w * self.active_mask(x).iter().filter(|&&m| m).count() as f64)
            .sum()
    }
}

/// `P'(· | x)` for a distribution `probs` over the rows of `table`.
pub fn mixed_action_dist(probs: &[f64], table: &PolicyTable, x: usize, mu: f64) -> Vec<f64> {
    let mask = table.active_mask(x);
    let k_x = mask.iter().filter(|&&m| m).count() as f64;
    let mut dist = vec![0.0; table.num_actions];
    for (i, &p) in probs.iter().enumerate() {
        dist[table.action(i, x)] += (1.0 - mu) * p;
    }
    for (d, &m) in dist.iter_mut().zip(&mask) {
        if m {
            // a lone reachable action can land one ulp above 1
            *d = (*d + mu / k_x).min(1.0);
        }
    }
    dist
}

/// `max_f E_x[1/P'(π_f(x)|x)] − E_x[|A(F', x)|]` and the maximizing row.
pub fn max_violation(
    probs: &[f64],
    table: &PolicyTable,
    weights: &[f64],
    mu: f64,
) -> Result<(f64, usize)> {
    let dists: Vec<Vec<f64>> = (0..table.num_contexts)
        .map(|x| mixed_action_dist(probs, table, x, mu))
        .collect();
    let mut best = (f64::NEG_INFINITY, 0);
    for i in 0..table.len() {
        let mut total = 0.0;
        for (x, &w) in weights.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            let p = dists[x][table.action(i, x)];
            if p <= 0.0 {
                return Err(Error::Internal(format!(
                    "regressor {i} has zero propensity in context {x}"
                )));
            }
            total += w / p;
        }
        if total > best.0 {
            best = (total, i);
        }
    }
    Ok((best.0 - table.bound(weights), best.1))
}

/// Recomputes `E_x[1/P'(π_f(x)|x)]` for every row from scratch, without
/// any cached per-context tables.
pub fn naive_inverse_propensities(
    probs: &[f64],
    table: &PolicyTable,
    weights: &[f64],
    mu: f64,
) -> Vec<f64> {
    (0..table.len())
        .map(|f| {
            let mut total = 0.0;
            for (x, &w) in weights.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                let a = table.action(f, x);
                let mut seen = vec![false; table.num_actions];
                let mut mass = 0.0;
                for (g, &p) in probs.iter().enumerate() {
                    let b = table.action(g, x);
                    seen[b] = true;
                    if b == a {
                        mass += p;
                    }
                }
                let k_x = seen.iter().filter(|&&s| s).count() as f64;
                total += w / ((1.0 - mu) * mass + mu / k_x);
            }
            total
        })
        .collect()
}

/// A solved exploration distribution with its per-context action
/// distributions cached.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationDist {
    probs: Vec<f64>,
    mu: f64,
    num_actions: usize,
    // action_dists[x * num_actions + a]
    action_dists: Vec<f64>,
}

impl ExplorationDist {
    pub fn new(probs: Vec<f64>, table: &PolicyTable, mu: f64) -> Self {
        let action_dists = (0..table.num_contexts)
            .flat_map(|x| mixed_action_dist(&probs, table, x, mu))
            .collect();
        Self {
            probs,
            mu,
            num_actions: table.num_actions,
            action_dists,
        }
    }

    pub fn uniform(table: &PolicyTable, mu: f64) -> Self {
        let n = table.len();
        Self::new(vec![1.0 / n as f64; n], table, mu)
    }

    /// Probabilities over the active regressors, in table order.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn action_dist(&self, x: usize) -> &[f64] {
        &self.action_dists[x * self.num_actions..(x + 1) * self.num_actions]
    }

    pub fn propensity(&self, x: usize, a: usize) -> f64 {
        self.action_dists[x * self.num_actions + a]
    }

    /// Samples `a ∼ P'(· | x)` and returns it with its propensity.
    pub fn sample<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> (usize, f64) {
        let dist = self.action_dist(x);
        let a = sample_index(dist, rng);
        (a, dist[a])
    }
}

/// Outcome of one solver call.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// Absolute violation of the returned distribution.
    pub final_violation: f64,
    /// `E_x[|A(F', x)|]`.
    pub bound: f64,
    pub tolerance: f64,
    pub converged: bool,
    /// Best violation so far, sampled at iterations 0, 10, 20, ...
    pub violation_trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Allowed violation as a fraction of `E_x[|A(F', x)|]`.
    pub rel_tol: f64,
    /// Iteration cap; `None` uses [`default_max_iters`].
    pub max_iters: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rel_tol: DEFAULT_REL_TOL,
            max_iters: None,
        }
    }
}

/// Per-context structure restricted to contexts with positive weight.
struct Workspace<'a> {
    table: &'a PolicyTable,
    mu: f64,
    weights: Vec<f64>,
    // slot[j * n + f]: position of π_f(x_j) within A(F', x_j)
    slot: Vec<usize>,
    // slot_offset[j]..slot_offset[j+1] indexes the flat per-slot arrays
    slot_offset: Vec<usize>,
    // groups[slot_offset[j] + s]: rows whose action in x_j is slot s
    groups: Vec<Vec<usize>>,
    bound: f64,
}

impl<'a> Workspace<'a> {
    fn new(table: &'a PolicyTable, weights: &[f64], mu: f64) -> Self {
        let n = table.len();
        let mut ws = Self {
            table,
            mu,
            weights: Vec::new(),
            slot: Vec::new(),
            slot_offset: vec![0],
            groups: Vec::new(),
            bound: 0.0,
        };
        for (x, &w) in weights.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            let mut slot_of_action = vec![usize::MAX; table.num_actions];
            let base = ws.groups.len();
            for f in 0..n {
                let a = table.action(f, x);
                if slot_of_action[a] == usize::MAX {
                    slot_of_action[a] = ws.groups.len() - base;
                    ws.groups.push(Vec::new());
                }
                ws.slot.push(slot_of_action[a]);
                ws.groups[base + slot_of_action[a]].push(f);
            }
            ws.weights.push(w);
            ws.slot_offset.push(ws.groups.len());
            ws.bound += w * (ws.groups.len() - base) as f64;
        }
        ws
    }

    fn n(&self) -> usize {
        self.table.len()
    }

    /// Fills `q` with `P'(slot | x_j)` for every active slot.
    fn propensities(&self, probs: &[f64], q: &mut Vec<f64>) {
        q.clear();
        for j in 0..self.weights.len() {
            let (lo, hi) = (self.slot_offset[j], self.slot_offset[j + 1]);
            let k_x = (hi - lo) as f64;
            for group in &self.groups[lo..hi] {
                let mass: f64 = group.iter().map(|&f| probs[f]).sum();
                q.push((1.0 - self.mu) * mass + self.mu / k_x);
            }
        }
    }

    /// `E_x[1/P'(π_f(x)|x)]` per row.
    fn inverse_propensities(&self, q: &[f64], out: &mut Vec<f64>) {
        let n = self.n();
        out.clear();
        out.resize(n, 0.0);
        for (j, &w) in self.weights.iter().enumerate() {
            let lo = self.slot_offset[j];
            for (f, o) in out.iter_mut().enumerate() {
                *o += w / q[lo + self.slot[j * n + f]];
            }
        }
    }

    fn violation(&self, inv: &[f64]) -> f64 {
        inv.iter().copied().fold(f64::NEG_INFINITY, f64::max) - self.bound
    }

    fn potential(&self, q: &[f64]) -> f64 {
        let mut total = 0.0;
        for (j, &w) in self.weights.iter().enumerate() {
            let (lo, hi) = (self.slot_offset[j], self.slot_offset[j + 1]);
            total += w * q[lo..hi].iter().map(|v| v.ln()).sum::<f64>();
        }
        total
    }

    /// Barrier objective `scale · Ψ(P) + Σ ln P(f)`; `None` outside the interior.
    fn barrier(&self, probs: &[f64], scale: f64, q: &mut Vec<f64>) -> Option<f64> {
        if probs.iter().any(|&p| p <= 0.0) {
            return None;
        }
        self.propensities(probs, q);
        if q.iter().any(|&v| v <= 0.0) {
            return None;
        }
        Some(scale * self.potential(q) + probs.iter().map(|p| p.ln()).sum::<f64>())
    }

    /// Scaled Newton system `D H D` where `D = diag(P)` and `H` is the
    /// negated Hessian of the barrier objective.
    fn scaled_hessian(&self, probs: &[f64], q: &[f64], scale: f64) -> DMatrix<f64> {
        let n = self.n();
        let c = scale * (1.0 - self.mu) * (1.0 - self.mu);
        let mut h = DMatrix::<f64>::identity(n, n);
        for (j, &w) in self.weights.iter().enumerate() {
            let (lo, hi) = (self.slot_offset[j], self.slot_offset[j + 1]);
            for (s, group) in self.groups[lo..hi].iter().enumerate() {
                let coef = c * w / (q[lo + s] * q[lo + s]);
                for &f in group {
                    for &g in group {
                        h[(f, g)] += coef * probs[f] * probs[g];
                    }
                }
            }
        }
        h
    }
}

fn solve_spd(m: &DMatrix<f64>, rhs: &[DVector<f64>]) -> Option<Vec<DVector<f64>>> {
    let mut ridge = 0.0;
    for _ in 0..6 {
        let mut reg = m.clone();
        for i in 0..reg.nrows() {
            reg[(i, i)] += ridge;
        }
        if let Some(chol) = reg.cholesky() {
            return Some(rhs.iter().map(|b| chol.solve(b)).collect());
        }
        ridge = if ridge == 0.0 { 1e-12 } else { ridge * 100.0 };
    }
    None
}

/// Finds `P` over the rows of `table` whose violation is at most
/// `rel_tol · E_x[|A(F', x)|]`.
///
/// `warm_start`, when given, is tried first (after renormalization) and is
/// returned unchanged if it already satisfies the constraint. Iterations
/// count Newton steps.
pub fn solve_exploration_dist(
    table: &PolicyTable,
    weights: &[f64],
    mu: f64,
    options: &SolverOptions,
    warm_start: Option<&[f64]>,
) -> Result<(ExplorationDist, SolveReport)> {
    if weights.len() != table.num_contexts() {
        return Err(Error::input(format!(
            "got {} context weights for {} contexts",
            weights.len(),
            table.num_contexts()
        )));
    }
    if !(0.0..=0.5).contains(&mu) {
        return Err(Error::input(format!("smoothing mass {mu} outside [0, 1/2]")));
    }
    if !(options.rel_tol > 0.0) {
        return Err(Error::input("solver tolerance must be positive"));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || !weights.iter().any(|&w| w > 0.0) {
        return Err(Error::input("context weights must be nonnegative with positive mass"));
    }
    let n = table.len();
    let ws = Workspace::new(table, weights, mu);
    let tol = options.rel_tol * ws.bound;
    let max_iters = options.max_iters.unwrap_or_else(|| default_max_iters(n));

    let uniform = vec![1.0 / n as f64; n];
    let mut probs = match warm_start {
        Some(w) if w.len() == n && w.iter().all(|p| p.is_finite() && *p >= 0.0) && w.iter().sum::<f64>() > 0.0 => {
            let total: f64 = w.iter().sum();
            w.iter().map(|p| p / total).collect()
        }
        _ => uniform.clone(),
    };

    let mut q = Vec::new();
    let mut inv = Vec::new();
    ws.propensities(&probs, &mut q);
    ws.inverse_propensities(&q, &mut inv);
    let mut best_violation = ws.violation(&inv);
    let mut best = probs.clone();
    let mut trace = vec![best_violation];
    let finish = |probs: Vec<f64>, iterations: usize, violation: f64, trace: Vec<f64>| {
        let report = SolveReport {
            iterations,
            final_violation: violation,
            bound: ws.bound,
            tolerance: tol,
            converged: violation <= tol,
            violation_trace: trace,
        };
        (ExplorationDist::new(probs, table, mu), report)
    };
    if best_violation <= tol {
        return Ok(finish(best, 0, best_violation, trace));
    }

    // Newton's method needs a strictly interior start.
    for (p, u) in probs.iter_mut().zip(&uniform) {
        *p = 0.5 * *p + 0.5 * u;
    }
    let mut scale = (n as f64 / ws.bound).max(1.0);
    let mut q_trial = Vec::new();
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        ws.propensities(&probs, &mut q);
        ws.inverse_propensities(&q, &mut inv);
        let grad_scaled = DVector::from_iterator(
            n,
            (0..n).map(|f| probs[f] * scale * (1.0 - mu) * inv[f] + 1.0),
        );
        let p_vec = DVector::from_column_slice(&probs);
        let hess = ws.scaled_hessian(&probs, &q, scale);
        let Some(sols) = solve_spd(&hess, &[grad_scaled, p_vec.clone()]) else {
            return Err(Error::Internal("singular Newton system in exploration solver".into()));
        };
        let (a, b) = (&sols[0], &sols[1]);
        let nu = p_vec.dot(a) / p_vec.dot(b);
        let u = a - b * nu;
        let decrement = u.dot(&(&hess * &u)).max(0.0);
        let dir: Vec<f64> = (0..n).map(|f| probs[f] * u[f]).collect();

        let mut step = 1.0f64;
        for (p, d) in probs.iter().zip(&dir) {
            if *d < 0.0 {
                step = step.min(0.99 * -p / d);
            }
        }
        let current = ws.barrier(&probs, scale, &mut q_trial).unwrap_or(f64::NEG_INFINITY);
        let mut trial = vec![0.0; n];
        let mut accepted = false;
        while step > 1e-14 {
            for f in 0..n {
                trial[f] = probs[f] + step * dir[f];
            }
            if let Some(v) = ws.barrier(&trial, scale, &mut q_trial) {
                if v >= current + 0.25 * step * decrement {
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if accepted {
            let total: f64 = trial.iter().sum();
            probs = trial.iter().map(|p| p / total).collect();
        }

        ws.propensities(&probs, &mut q);
        ws.inverse_propensities(&q, &mut inv);
        let violation = ws.violation(&inv);
        if violation < best_violation {
            best_violation = violation;
            best.clone_from(&probs);
        }
        if iterations % 10 == 0 {
            trace.push(best_violation);
        }
        if best_violation <= tol {
            return Ok(finish(best, iterations, best_violation, trace));
        }
        // Re-center on a more aggressive barrier once this one is solved.
        if !accepted || decrement < 1e-9 {
            scale *= 10.0;
            if scale > 1e16 {
                break;
            }
        }
    }
    let (_, report) = finish(best, iterations, best_violation, trace);
    Err(Error::Convergence(report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(num_actions: usize, policies: &[&[usize]]) -> PolicyTable {
        let nx = policies[0].len();
        PolicyTable::new(nx, num_actions, &policies.iter().map(|p| p.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn mixed_dist_cases() {
        let single = table(3, &[&[2]]);
        assert_eq!(mixed_action_dist(&[1.0], &single, 0, 0.3), vec![0.0, 0.0, 1.0]);
        let pair = table(2, &[&[0], &[1]]);
        assert!(close(&mixed_action_dist(&[0.5, 0.5], &pair, 0, 0.2), &[0.5, 0.5], 1e-15));
        assert!(close(&mixed_action_dist(&[1.0, 0.0], &pair, 0, 0.1), &[0.95, 0.05], 1e-15));
    }

    #[test]
    fn violation_cases() {
        let single = table(2, &[&[1, 0]]);
        assert_eq!(max_violation(&[1.0], &single, &[0.5, 0.5], 0.1).unwrap().0, 0.0);
        let pair = table(2, &[&[0], &[1]]);
        assert!(max_violation(&[0.5, 0.5], &pair, &[1.0], 0.0).unwrap().0.abs() < 1e-15);
        // two rows share action 0, the third plays action 1; mu = 0
        let three = table(2, &[&[0], &[0], &[1]]);
        assert!(max_violation(&[0.25, 0.25, 0.5], &three, &[1.0], 0.0).unwrap().0.abs() < 1e-15);
        let (v, witness) = max_violation(&[0.3, 0.3, 0.4], &three, &[1.0], 0.0).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
        assert_eq!(witness, 2);
        assert!(matches!(
            max_violation(&[1.0, 0.0], &pair, &[1.0], 0.0),
            Err(Error::Internal(_))
        ));
    }

    #[test]
    fn singleton_needs_no_iterations() {
        let single = table(3, &[&[1, 2]]);
        let (dist, report) =
            solve_exploration_dist(&single, &[0.3, 0.7], 0.1, &SolverOptions::default(), None).unwrap();
        assert_eq!(report.iterations, 0);
        assert!(report.converged);
        assert_eq!(dist.probs(), &[1.0]);
        assert_eq!(dist.action_dist(1), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn symmetric_pair_is_uniform() {
        let pair = table(2, &[&[0], &[1]]);
        let (dist, report) =
            solve_exploration_dist(&pair, &[1.0], 0.25, &SolverOptions::default(), None).unwrap();
        assert!(report.converged);
        assert!(close(dist.probs(), &[0.5, 0.5], 1e-6));
    }

    #[test]
    fn shared_action_closed_form() {
        // P'(1) = (1 − mu) P(f3) + mu/2 must equal 1/2, so P(f3) = 1/2.
        let three = table(2, &[&[0], &[0], &[1]]);
        for mu in [0.0, 0.1, 0.4] {
            let opts = SolverOptions::default();
            let (dist, report) = solve_exploration_dist(&three, &[1.0], mu, &opts, None).unwrap();
            assert!(report.converged, "mu={mu}: {report:?}");
            assert!((dist.probs()[2] - 0.5).abs() < 1e-5, "mu={mu}: {:?}", dist.probs());
        }
    }

    #[test]
    fn warm_start_reused_when_feasible() {
        let three = table(2, &[&[0], &[0], &[1]]);
        let warm = [0.5, 0.0, 0.5];
        let (dist, report) =
            solve_exploration_dist(&three, &[1.0], 0.1, &SolverOptions::default(), Some(&warm)).unwrap();
        assert_eq!(report.iterations, 0);
        assert_eq!(dist.probs(), &warm);
    }

    #[test]
    fn convergence_error_carries_report() {
        let t = table(3, &[&[0, 1], &[1, 2], &[2, 2], &[0, 0]]);
        let opts = SolverOptions {
            rel_tol: 1e-12,
            max_iters: Some(1),
        };
        match solve_exploration_dist(&t, &[0.9, 0.1], 0.05, &opts, None) {
            Err(Error::Convergence(r)) => {
                assert_eq!(r.iterations, 1);
                assert!(!r.converged);
            }
            Ok((_, r)) => assert!(r.converged),
            Err(e) => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let pair = table(2, &[&[0], &[1]]);
        let opts = SolverOptions::default();
        assert!(solve_exploration_dist(&pair, &[1.0], 0.6, &opts, None).is_err());
        assert!(solve_exploration_dist(&pair, &[0.0], 0.1, &opts, None).is_err());
        assert!(solve_exploration_dist(&pair, &[0.5, 0.5], 0.1, &opts, None).is_err());
        assert!(PolicyTable::new(1, 2, &[]).is_err());
    }
}
