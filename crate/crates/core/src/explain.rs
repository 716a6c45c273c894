//! One full explanation run on an enumerated state space: transition model,
//! path matrix, embedding, meta-states, out-path counts and strategic sets.

use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::env::{EnvModel, StateSpace};
use crate::error::{Error, Result};
use crate::metastates::{cluster_meta_states, spectral_embed, ClusterOptions, MetaStatePartition};
use crate::pathgraph::{build_gamma_cached, out_path_counts, CountOptions, OutPathCounts, PathMatrix};
use crate::policy::{induce_transition_model, Policy};
use crate::strategic::{greedy_strategic, pick_goal, StrategicOptions, StrategicSet};

/// Every knob of an explanation run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsxParams {
    pub k: usize,
    pub eta: f64,
    pub eps_phi: Option<f64>,
    pub lambda: f64,
    pub eps_g: f64,
    pub min_gain_ratio: f64,
    pub max_strategic_per_meta: Option<usize>,
    pub sample_fraction: f64,
    pub seed: u64,
    pub restarts: usize,
    pub max_iters: usize,
    pub normalise_counts: bool,
    pub weighted_counts: bool,
}

impl Default for SsxParams {
    fn default() -> Self {
        SsxParams {
            k: 4,
            eta: 1.0,
            eps_phi: None,
            lambda: 1.0,
            eps_g: 0.1,
            min_gain_ratio: 0.1,
            max_strategic_per_meta: None,
            sample_fraction: 1.0,
            seed: 0,
            restarts: 5,
            max_iters: 100,
            normalise_counts: true,
            weighted_counts: false,
        }
    }
}

impl SsxParams {
    pub fn cluster_options(&self) -> ClusterOptions {
        ClusterOptions {
            k: self.k,
            eta: self.eta,
            eps_phi: self.eps_phi,
            seed: self.seed,
            restarts: self.restarts,
            sample_fraction: self.sample_fraction,
            max_iters: self.max_iters,
            normalise_counts: self.normalise_counts,
            weighted_counts: self.weighted_counts,
        }
    }

    pub fn count_options(&self) -> CountOptions {
        CountOptions { sample_fraction: self.sample_fraction, seed: self.seed, weighted: self.weighted_counts }
    }

    pub fn strategic_options(&self) -> StrategicOptions {
        StrategicOptions {
            lambda: self.lambda,
            eps_g: self.eps_g,
            min_gain_ratio: self.min_gain_ratio,
            max_per_meta: self.max_strategic_per_meta,
        }
    }
}

/// Result of [`explain`]. Indices refer to `space`.
#[derive(Debug, Clone)]
pub struct Explanation {
    pub space: StateSpace,
    pub pm: PathMatrix,
    pub partition: MetaStatePartition,
    pub counts: OutPathCounts,
    pub strategic: Vec<StrategicSet>,
    pub goal: Option<usize>,
    pub goal_meta_state: Option<usize>,
    pub params: SsxParams,
    /// Wall-clock time of the final out-path count computation.
    pub count_time: Duration,
}

impl Explanation {
    /// Priority strategic state of the meta-state holding `state`.
    pub fn priority_for(&self, state: usize) -> Option<usize> {
        let meta = *self.partition.assignment.get(state)?;
        self.strategic[meta].priority()
    }
}

/// Runs the pipeline on `space`. Goal states come from the environment's
/// goal predicate; with several, [`pick_goal`] chooses one.
///
/// A degenerate meta-state (every out-path count zero) keeps its
/// lowest-index member, flagged, so every meta-state has a pick.
pub fn explain(
    env: &EnvModel,
    policy: &dyn Policy,
    space: StateSpace,
    params: &SsxParams,
    cache_dir: Option<&Path>,
) -> Result<Explanation> {
    if space.len() < params.k {
        return Err(Error::InvalidConfig(format!(
            "k = {} exceeds the {} states in the space",
            params.k,
            space.len()
        )));
    }
    let model = induce_transition_model(env, policy, &space).map_err(Error::at("transition model"))?;
    let pm = build_gamma_cached(&model, cache_dir).map_err(Error::at("path matrix"))?;
    let emb = spectral_embed(&pm, params.k).map_err(Error::at("embedding"))?;
    let partition = cluster_meta_states(&emb, &pm, &params.cluster_options()).map_err(Error::at("meta-states"))?;
    let start = Instant::now();
    let counts =
        out_path_counts(&pm, &partition.assignment, params.k, params.count_options()).map_err(Error::at("out-path counts"))?;
    let count_time = start.elapsed();
    let goals: Vec<usize> = (0..space.len()).filter(|&i| env.is_goal(space.state(i))).collect();
    let goal = pick_goal(&pm, &goals);
    let strategic = greedy_strategic(&partition.assignment, params.k, &counts, &pm, &params.strategic_options(), goal)
        .map_err(Error::at("strategic states"))?;
    let goal_meta_state = goal.map(|g| partition.assignment[g]);
    Ok(Explanation {
        space,
        pm,
        partition,
        counts,
        strategic,
        goal,
        goal_meta_state,
        params: *params,
        count_time,
    })
}
