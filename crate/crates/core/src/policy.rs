//! Expert policies and the policy-marginalised one-step transition model.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::{EnvModel, GridState, Pos, RewardScheme, Status};
use crate::error::{Error, Result};

/// A stochastic policy: a distribution over `env.actions()` for every state.
pub trait Policy: Sync {
    fn action_distribution(&self, env: &EnvModel, s: &GridState) -> Vec<f64>;
}

/// Adapter turning a closure into a [`Policy`].
pub struct FnPolicy<F>(pub F);

impl<F> Policy for FnPolicy<F>
where
    F: Fn(&EnvModel, &GridState) -> Vec<f64> + Sync,
{
    fn action_distribution(&self, env: &EnvModel, s: &GridState) -> Vec<f64> {
        (self.0)(env, s)
    }
}

/// Uniform over all actions.
pub struct UniformPolicy;

impl Policy for UniformPolicy {
    fn action_distribution(&self, env: &EnvModel, _s: &GridState) -> Vec<f64> {
        let n = env.actions().len();
        vec![1.0 / n as f64; n]
    }
}

/// Numerically stable softmax of `scores / temperature`.
pub fn softmax(scores: &[f64], temperature: f64) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = scores.iter().map(|&q| ((q - max) / temperature).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= total);
    out
}

/// Policy stored as an explicit table.
#[derive(Debug, Clone, Default)]
pub struct TabularPolicy {
    table: HashMap<GridState, Vec<f64>>,
    n_actions: usize,
}

impl TabularPolicy {
    pub fn new(n_actions: usize) -> Self {
        TabularPolicy { table: HashMap::new(), n_actions }
    }

    pub fn insert(&mut self, s: GridState, probs: Vec<f64>) {
        assert_eq!(probs.len(), self.n_actions);
        self.table.insert(s, probs);
    }

    pub fn get(&self, s: &GridState) -> Option<&[f64]> {
        self.table.get(s).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    /// JSON object mapping encoded states to probability vectors, keys sorted.
    pub fn to_json(&self, env: &EnvModel) -> serde_json::Value {
        let map: BTreeMap<String, &Vec<f64>> =
            self.table.iter().map(|(s, p)| (env.encode(s), p)).collect();
        serde_json::to_value(map).expect("string keys serialise")
    }

    pub fn from_json(env: &EnvModel, value: &serde_json::Value) -> Result<Self> {
        let map: BTreeMap<String, Vec<f64>> = serde_json::from_value(value.clone())?;
        let mut policy = TabularPolicy::new(env.actions().len());
        for (key, probs) in map {
            if probs.len() != env.actions().len() {
                return Err(Error::Dimension { expected: env.actions().len(), got: probs.len() });
            }
            policy.table.insert(env.decode(&key)?, probs);
        }
        Ok(policy)
    }
}

impl Policy for TabularPolicy {
    /// States missing from the table fall back to uniform.
    fn action_distribution(&self, _env: &EnvModel, s: &GridState) -> Vec<f64> {
        match self.table.get(s) {
            Some(p) => p.clone(),
            None => vec![1.0 / self.n_actions as f64; self.n_actions],
        }
    }
}

/// State values and action values over a [`StateSpace`](crate::env::StateSpace).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    pub values: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub iterations: usize,
    pub residual: f64,
}

impl ValueTable {
    pub fn greedy_action(&self, id: usize) -> usize {
        argmax(&self.q[id])
    }

    pub fn to_json(&self, env: &EnvModel, space: &crate::env::StateSpace) -> serde_json::Value {
        let map: BTreeMap<String, serde_json::Value> = (0..space.len())
            .map(|i| {
                (
                    env.encode(space.state(i)),
                    serde_json::json!({ "v": self.values[i], "q": self.q[i] }),
                )
            })
            .collect();
        serde_json::to_value(map).expect("string keys serialise")
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Value iteration over an enumerated state space. Absorbing and boundary
/// states have value zero. The returned policy is a softmax over Q with the
/// given temperature.
pub fn value_iteration(
    env: &EnvModel,
    space: &crate::env::StateSpace,
    discount: f64,
    tolerance: f64,
    max_iters: usize,
    temperature: f64,
) -> Result<(ValueTable, TabularPolicy)> {
    value_iteration_with_rewards(env, space, discount, tolerance, max_iters, temperature, |r| r)
}

/// [`value_iteration`] with every environment reward passed through `reward`.
pub fn value_iteration_with_rewards(
    env: &EnvModel,
    space: &crate::env::StateSpace,
    discount: f64,
    tolerance: f64,
    max_iters: usize,
    temperature: f64,
    reward: impl Fn(f64) -> f64,
) -> Result<(ValueTable, TabularPolicy)> {
    if !(discount > 0.0 && discount < 1.0) {
        return Err(Error::InvalidConfig(format!("discount must be in (0,1), got {discount}")));
    }
    if tolerance <= 0.0 || temperature <= 0.0 {
        return Err(Error::InvalidConfig("tolerance and temperature must be positive".into()));
    }
    let n_actions = env.actions().len();
    // (successor, prob, reward) per state and action.
    let mut model: Vec<Vec<Vec<(usize, f64, f64)>>> = Vec::with_capacity(space.len());
    let mut terminal = vec![false; space.len()];
    for (i, s) in space.states().iter().enumerate() {
        terminal[i] = env.is_absorbing(s) || space.is_boundary(i);
        let mut per_action = Vec::with_capacity(n_actions);
        for a in 0..n_actions {
            let mut outs = Vec::new();
            if !terminal[i] {
                for o in env.step_distribution(s, a) {
                    let j = space
                        .id_of(&o.next)
                        .ok_or_else(|| Error::UnknownState(env.encode(&o.next)))?;
                    outs.push((j, o.prob, reward(o.reward)));
                }
            }
            per_action.push(outs);
        }
        model.push(per_action);
    }

    let q_of = |values: &[f64], i: usize, a: usize| -> f64 {
        model[i][a]
            .iter()
            .map(|&(j, p, r)| p * (r + discount * values[j]))
            .sum()
    };

    let mut values = vec![0.0; space.len()];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        residual = 0.0;
        let mut next = vec![0.0; space.len()];
        for i in 0..space.len() {
            if terminal[i] {
                continue;
            }
            let best = (0..n_actions)
                .map(|a| q_of(&values, i, a))
                .fold(f64::NEG_INFINITY, f64::max);
            residual = f64::max(residual, (best - values[i]).abs());
            next[i] = best;
        }
        values = next;
        if residual < tolerance {
            break;
        }
    }
    if residual >= tolerance {
        return Err(Error::NotConverged { iters: iterations, residual });
    }

    let q: Vec<Vec<f64>> = (0..space.len())
        .map(|i| (0..n_actions).map(|a| q_of(&values, i, a)).collect())
        .collect();
    let mut policy = TabularPolicy::new(n_actions);
    for (i, s) in space.states().iter().enumerate() {
        policy.insert(s.clone(), softmax(&q[i], temperature));
    }
    Ok((ValueTable { values, q, iterations, residual }, policy))
}

/// Hand-written pacman expert.
///
/// EAT heads for the nearest food, avoids the pill and keeps away from an
/// inedible ghost. HUNT heads for the pill while the ghost is dangerous and
/// chases the ghost once it is edible. Action scores go through a softmax
/// with the configured temperature.
#[derive(Debug, Clone)]
pub struct ScriptedMiniPac {
    scheme: RewardScheme,
    temperature: f64,
    /// Cell-to-cell maze distances, `usize::MAX` when unreachable.
    dist: Vec<Vec<usize>>,
    cols: usize,
    pill: Option<Pos>,
    pub ghost_radius: usize,
    pub ghost_aversion: f64,
    pub pill_aversion: f64,
}

impl ScriptedMiniPac {
    pub fn new(env: &EnvModel, scheme: RewardScheme, temperature: f64) -> Result<Self> {
        if temperature <= 0.0 {
            return Err(Error::InvalidConfig(format!("temperature must be positive, got {temperature}")));
        }
        let layout = env.layout();
        let cells = layout.rows() * layout.cols();
        let dist = (0..cells)
            .map(|i| {
                layout
                    .bfs_distances(layout.pos_of(i))
                    .into_iter()
                    .map(|d| d.unwrap_or(usize::MAX))
                    .collect()
            })
            .collect();
        Ok(ScriptedMiniPac {
            scheme,
            temperature,
            dist,
            cols: layout.cols(),
            pill: env.pill_cell(),
            ghost_radius: 2,
            ghost_aversion: 4.0,
            pill_aversion: 3.0,
        })
    }

    fn d(&self, a: Pos, b: Pos) -> usize {
        self.dist[a.row as usize * self.cols + a.col as usize][b.row as usize * self.cols + b.col as usize]
    }

    fn nearest_food(&self, p: Pos, food: u128) -> Option<usize> {
        let row = &self.dist[p.row as usize * self.cols + p.col as usize];
        let mut best = None;
        let mut f = food;
        while f != 0 {
            let bit = f.trailing_zeros() as usize;
            let d = row[bit];
            if best.is_none_or(|b| d < b) {
                best = Some(d);
            }
            f &= f - 1;
        }
        best
    }

    /// Raw preference of moving the agent to `p` from state `s`.
    pub fn score(&self, s: &GridState, p: Pos) -> f64 {
        let mut score = 0.0;
        let edible = s.edible > 1 || (s.pill && Some(p) == self.pill);
        if let Some(g) = s.ghost {
            if !edible {
                let d = self.d(p, g.pos);
                if d <= self.ghost_radius {
                    score -= self.ghost_aversion * (self.ghost_radius + 1 - d) as f64;
                }
            }
        }
        match self.scheme {
            RewardScheme::Hunt => {
                if let (Some(g), true) = (s.ghost, s.edible > 1) {
                    score -= self.d(p, g.pos) as f64;
                } else if let (Some(pill), true) = (self.pill, s.pill) {
                    score -= self.d(p, pill) as f64;
                }
            }
            _ => {
                if let Some(d) = self.nearest_food(p, s.food) {
                    score -= d as f64;
                }
                if s.pill && Some(p) == self.pill {
                    score -= self.pill_aversion;
                }
            }
        }
        score
    }
}

impl Policy for ScriptedMiniPac {
    fn action_distribution(&self, env: &EnvModel, s: &GridState) -> Vec<f64> {
        let n = env.actions().len();
        if s.status != Status::Playing {
            return vec![1.0 / n as f64; n];
        }
        let scores: Vec<f64> = env
            .actions()
            .iter()
            .map(|&a| self.score(s, env.move_agent(s.agent, a)))
            .collect();
        softmax(&scores, self.temperature)
    }
}

/// Sparse one-step state-to-state likelihoods under a policy.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionModel {
    rows: Vec<Vec<(usize, f64)>>,
}

impl TransitionModel {
    /// Builds a model from explicit rows. Entries are merged and sorted by
    /// target; likelihoods outside `[0, 1]` are rejected.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n = rows.len();
        let mut out = Vec::with_capacity(n);
        for (i, row) in rows.into_iter().enumerate() {
            let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
            for (j, p) in row {
                if j >= n {
                    return Err(Error::IndexOutOfRange { index: j, len: n });
                }
                if !(0.0..=1.0).contains(&p) || p.is_nan() {
                    return Err(Error::InvalidModel(format!("likelihood {p} on edge {i}->{j}")));
                }
                *merged.entry(j).or_insert(0.0) += p;
            }
            if merged.values().any(|&p| p > 1.0 + 1e-9) {
                return Err(Error::InvalidModel(format!("row {i} has a likelihood above one")));
            }
            out.push(merged.into_iter().filter(|&(_, p)| p > 0.0).collect());
        }
        Ok(TransitionModel { rows: out })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn support(&self, s: usize) -> &[(usize, f64)] {
        &self.rows[s]
    }

    pub fn likelihood(&self, s: usize, t: usize) -> f64 {
        let row = &self.rows[s];
        match row.binary_search_by_key(&t, |&(j, _)| j) {
            Ok(k) => row[k].1,
            Err(_) => 0.0,
        }
    }

    pub fn row_sum(&self, s: usize) -> f64 {
        self.rows[s].iter().map(|&(_, p)| p).sum()
    }

    /// Content hash over every (source, target, probability-bits) triple.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.rows.len() as u64).to_le_bytes());
        for row in &self.rows {
            h.update((row.len() as u64).to_le_bytes());
            for &(j, p) in row {
                h.update((j as u64).to_le_bytes());
                h.update(p.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

/// Marginalises `policy` through the environment dynamics on `space`.
/// Absorbing states and boundary states (cut by a local horizon) become
/// self-loops with likelihood one.
pub fn induce_transition_model(
    env: &EnvModel,
    policy: &dyn Policy,
    space: &crate::env::StateSpace,
) -> Result<TransitionModel> {
    let mut rows = Vec::with_capacity(space.len());
    for (i, s) in space.states().iter().enumerate() {
        if env.is_absorbing(s) || space.is_boundary(i) {
            rows.push(vec![(i, 1.0)]);
            continue;
        }
        let pi = policy.action_distribution(env, s);
        if pi.len() != env.actions().len() {
            return Err(Error::Dimension { expected: env.actions().len(), got: pi.len() });
        }
        let mut row: BTreeMap<usize, f64> = BTreeMap::new();
        for (a, &pa) in pi.iter().enumerate() {
            if pa <= 0.0 {
                continue;
            }
            for o in env.step_distribution(s, a) {
                let j = space
                    .id_of(&o.next)
                    .ok_or_else(|| Error::UnknownState(env.encode(&o.next)))?;
                *row.entry(j).or_insert(0.0) += pa * o.prob;
            }
        }
        rows.push(row.into_iter().collect());
    }
    Ok(TransitionModel { rows })
}
