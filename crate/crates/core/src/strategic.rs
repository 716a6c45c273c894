//! Strategic states: per meta-state, a short ordered list of states that
//! lie on many out-paths while staying far apart in path likelihood.
//!
//! Selection is greedy on a submodular objective, so each pick's marginal
//! gain can only shrink as the set grows. The first pick of a meta-state is
//! its priority strategic state.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::EnvModel;
use crate::error::{Error, Result};
use crate::pathgraph::{OutPathCounts, PathMatrix};
use crate::policy::ValueTable;

/// Relative tolerance under which two gains count as tied.
const GAIN_TIE_TOLERANCE: f64 = 1e-12;

/// Ordered strategic states of one meta-state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategicSet {
    pub meta_state: usize,
    /// Selection order; the first entry is the priority strategic state.
    pub states: Vec<usize>,
    /// `gains[i]` is the objective after `i + 1` picks minus after `i`.
    pub gains: Vec<f64>,
    pub lambda: f64,
    /// Meta-state holds the goal and was not searched.
    pub goal: bool,
    /// Every member has a zero out-path count; the pick is the lowest index.
    pub degenerate: bool,
}

impl StrategicSet {
    pub fn priority(&self) -> Option<usize> {
        self.states.first().copied()
    }
}

/// Greedy selection parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategicOptions {
    /// Weight of the pairwise closeness penalty.
    pub lambda: f64,
    /// Stop once a pick changes the objective by less than this.
    pub eps_g: f64,
    /// Reject a pick whose gain is below this fraction of the objective.
    pub min_gain_ratio: f64,
    /// Cap on picks per meta-state.
    pub max_per_meta: Option<usize>,
}

impl Default for StrategicOptions {
    fn default() -> Self {
        StrategicOptions { lambda: 1.0, eps_g: 0.1, min_gain_ratio: 0.1, max_per_meta: None }
    }
}

impl StrategicOptions {
    fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if !(self.eps_g > 0.0) {
            return Err(Error::InvalidConfig(format!("eps_g must be positive, got {}", self.eps_g)));
        }
        if !(0.0..1.0).contains(&self.min_gain_ratio) {
            return Err(Error::InvalidConfig(format!(
                "min_gain_ratio must be in [0, 1), got {}",
                self.min_gain_ratio
            )));
        }
        if self.max_per_meta == Some(0) {
            return Err(Error::InvalidConfig("max_strategic_per_meta must be at least 1".into()));
        }
        Ok(())
    }
}

/// Closeness of two states: the larger of the two directed path likelihoods.
fn closeness(pm: &PathMatrix, a: usize, b: usize) -> f64 {
    pm.likelihood(a, b).max(pm.likelihood(b, a))
}

/// Selection objective of `candidates` within `meta`: summed out-path
/// counts minus `lambda` times the summed pairwise closeness.
pub fn selection_objective(
    candidates: &[usize],
    meta: usize,
    counts: &OutPathCounts,
    pm: &PathMatrix,
    lambda: f64,
) -> f64 {
    let reward: f64 = candidates.iter().map(|&g| counts.get(g, meta)).sum();
    let mut penalty = 0.0;
    for (i, &a) in candidates.iter().enumerate() {
        for &b in &candidates[i + 1..] {
            penalty += closeness(pm, a, b);
        }
    }
    reward - lambda * penalty
}

/// Change in [`selection_objective`] from adding `candidate` to `current`.
pub fn marginal_gain(
    current: &[usize],
    candidate: usize,
    meta: usize,
    counts: &OutPathCounts,
    pm: &PathMatrix,
    lambda: f64,
) -> f64 {
    let penalty: f64 = current.iter().map(|&g| closeness(pm, candidate, g)).sum();
    counts.get(candidate, meta) - lambda * penalty
}

/// Greedy selection inside one meta-state with members `members`.
pub fn greedy_meta_state(
    members: &[usize],
    meta: usize,
    counts: &OutPathCounts,
    pm: &PathMatrix,
    opts: &StrategicOptions,
) -> Result<StrategicSet> {
    opts.validate()?;
    let mut set = StrategicSet {
        meta_state: meta,
        states: Vec::new(),
        gains: Vec::new(),
        lambda: opts.lambda,
        goal: false,
        degenerate: false,
    };
    if members.is_empty() {
        return Ok(set);
    }
    if members.iter().all(|&s| counts.get(s, meta) == 0.0) {
        let pick = *members.iter().min().expect("non-empty");
        set.states.push(pick);
        set.gains.push(0.0);
        set.degenerate = true;
        return Ok(set);
    }
    let cap = opts.max_per_meta.unwrap_or(usize::MAX).min(members.len());
    let mut chosen = vec![false; members.len()];
    let mut value = 0.0;
    while set.states.len() < cap {
        let current = &set.states;
        let best = members
            .par_iter()
            .enumerate()
            .filter(|&(i, _)| !chosen[i])
            .map(|(i, &s)| (i, s, marginal_gain(current, s, meta, counts, pm, opts.lambda)))
            .reduce_with(|a, b| if better(b, a, meta, counts) { b } else { a });
        let Some((i, s, gain)) = best else { break };
        if !set.states.is_empty() && gain < opts.min_gain_ratio * value {
            break;
        }
        chosen[i] = true;
        set.states.push(s);
        set.gains.push(gain);
        value += gain;
        if gain.abs() < opts.eps_g {
            break;
        }
    }
    Ok(set)
}

/// Candidate order: larger gain, then larger count, then lower state index.
fn better(a: (usize, usize, f64), b: (usize, usize, f64), meta: usize, counts: &OutPathCounts) -> bool {
    let scale = a.2.abs().max(b.2.abs()).max(1.0);
    if (a.2 - b.2).abs() > GAIN_TIE_TOLERANCE * scale {
        return a.2 > b.2;
    }
    let (ca, cb) = (counts.get(a.1, meta), counts.get(b.1, meta));
    if ca != cb {
        return ca > cb;
    }
    a.1 < b.1
}

/// Strategic sets for every meta-state of `assignment`. The meta-state
/// holding `goal`, when given, gets exactly the goal.
pub fn greedy_strategic(
    assignment: &[usize],
    k: usize,
    counts: &OutPathCounts,
    pm: &PathMatrix,
    opts: &StrategicOptions,
    goal: Option<usize>,
) -> Result<Vec<StrategicSet>> {
    opts.validate()?;
    let n = pm.len();
    if assignment.len() != n {
        return Err(Error::Dimension { expected: n, got: assignment.len() });
    }
    if counts.n_states() != n || counts.n_meta() != k {
        return Err(Error::Dimension { expected: n * k, got: counts.n_states() * counts.n_meta() });
    }
    if let Some(&bad) = assignment.iter().find(|&&m| m >= k) {
        return Err(Error::InvalidConfig(format!("meta-state {bad} out of range for k = {k}")));
    }
    if let Some(g) = goal.filter(|&g| g >= n) {
        return Err(Error::IndexOutOfRange { index: g, len: n });
    }
    let goal_meta = goal.map(|g| assignment[g]);
    (0..k)
        .into_par_iter()
        .map(|meta| {
            if let (Some(g), Some(gm)) = (goal, goal_meta) {
                if gm == meta {
                    return Ok(StrategicSet {
                        meta_state: meta,
                        states: vec![g],
                        gains: vec![counts.get(g, meta)],
                        lambda: opts.lambda,
                        goal: true,
                        degenerate: false,
                    });
                }
            }
            let members: Vec<usize> = (0..n).filter(|&s| assignment[s] == meta).collect();
            greedy_meta_state(&members, meta, counts, pm, opts)
        })
        .collect()
}

/// The goal among `candidates` with the greatest incoming path likelihood
/// mass; ties go to the lowest index.
pub fn pick_goal(pm: &PathMatrix, candidates: &[usize]) -> Option<usize> {
    let mass = |g: usize| -> f64 { (0..pm.len()).map(|s| pm.likelihood(s, g)).sum() };
    let mut best: Option<(usize, f64)> = None;
    for &g in candidates {
        let m = mass(g);
        if best.is_none_or(|(b, bm)| m > bm || (m == bm && g < b)) {
            best = Some((g, m));
        }
    }
    best.map(|(g, _)| g)
}

/// Action-value spread `max_a Q(s,a) - min_a Q(s,a)` per state.
pub fn importance_scores(env: &EnvModel, table: &ValueTable) -> Result<Vec<f64>> {
    let n_actions = env.actions().len();
    table
        .q
        .iter()
        .enumerate()
        .map(|(s, row)| {
            if row.len() != n_actions || row.iter().any(|q| !q.is_finite()) {
                return Err(Error::MissingQ(s));
            }
            let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
            Ok(hi - lo)
        })
        .collect()
}
