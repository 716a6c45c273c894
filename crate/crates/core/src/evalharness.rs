//! Evaluation studies on local explanations: out-path sampling stability,
//! horizon faithfulness, perturbation stability, local state-space growth
//! and the meta-state count sweep.
//!
//! Every study is seed-deterministic. Roots are processed in parallel and
//! aggregated in root order.

mod plot;

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{EnvModel, GridState, Pos, Status};
use crate::error::{Error, Result};
use crate::explain::{explain, Explanation, SsxParams};
use crate::metastates::{cluster_meta_states, spectral_embed, ClusterOptions};
use crate::pathgraph::{all_actions, local_approximation, out_path_counts, PathMatrix};
use crate::policy::Policy;

pub use plot::{line_chart, Series};

/// Distances between two boards.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Displacement {
    pub agent: f64,
    pub ghost: f64,
    pub food: f64,
}

impl Displacement {
    fn add(self, o: Displacement) -> Displacement {
        Displacement { agent: self.agent + o.agent, ghost: self.ghost + o.ghost, food: self.food + o.food }
    }

    fn scale(self, f: f64) -> Displacement {
        Displacement { agent: self.agent * f, ghost: self.ghost * f, food: self.food * f }
    }

    fn mean(items: &[Displacement]) -> Displacement {
        if items.is_empty() {
            return Displacement::default();
        }
        items.iter().fold(Displacement::default(), |a, &b| a.add(b)).scale(1.0 / items.len() as f64)
    }
}

/// Euclidean agent and ghost displacement and the L2 norm of the food
/// indicator difference. A missing ghost on either side counts as zero.
pub fn board_distance(a: &GridState, b: &GridState) -> Displacement {
    let ghost = match (a.ghost, b.ghost) {
        (Some(x), Some(y)) => x.pos.euclidean(y.pos),
        _ => 0.0,
    };
    Displacement {
        agent: a.agent.euclidean(b.agent),
        ghost,
        food: ((a.food ^ b.food).count_ones() as f64).sqrt(),
    }
}

/// Boards visited by seeded expert rollouts from the start state: rollout
/// `i` runs a uniformly drawn number of steps in `0..=max_steps`. Rollouts
/// ending in an absorbing state are retried with a fresh draw.
pub fn rollout_roots(env: &EnvModel, policy: &dyn Policy, count: usize, max_steps: usize, seed: u64) -> Vec<GridState> {
    sample_roots(env, policy, count, max_steps, seed, |_| true)
}

/// [`rollout_roots`] restricted to boards whose local space within
/// `horizon` moves has at most `max_states` states.
pub fn bounded_roots(
    env: &EnvModel,
    policy: &dyn Policy,
    count: usize,
    max_steps: usize,
    seed: u64,
    horizon: usize,
    max_states: usize,
) -> Vec<GridState> {
    sample_roots(env, policy, count, max_steps, seed, |s| {
        local_approximation(env, s, horizon, all_actions).is_ok_and(|l| l.len() <= max_states)
    })
}

fn sample_roots(
    env: &EnvModel,
    policy: &dyn Policy,
    count: usize,
    max_steps: usize,
    seed: u64,
    accept: impl Fn(&GridState) -> bool,
) -> Vec<GridState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut roots = Vec::with_capacity(count);
    let mut attempts = 0;
    while roots.len() < count {
        attempts += 1;
        assert!(attempts <= 1000 * count.max(1), "no acceptable rollout roots");
        let steps = rng.gen_range(0..=max_steps);
        let mut s = env.start_state();
        for _ in 0..steps {
            if env.is_absorbing(&s) {
                break;
            }
            s = sample_step(env, policy, &s, &mut rng);
        }
        if !env.is_absorbing(&s) && accept(&s) {
            roots.push(s);
        }
    }
    roots
}

fn sample_index(weights: impl Iterator<Item = f64>, rng: &mut impl Rng) -> usize {
    let mut u: f64 = rng.gen();
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        last = i;
        if u < w {
            return i;
        }
        u -= w;
    }
    last
}

fn sample_step(env: &EnvModel, policy: &dyn Policy, s: &GridState, rng: &mut impl Rng) -> GridState {
    let pi = policy.action_distribution(env, s);
    let a = sample_index(pi.iter().copied(), rng);
    let outcomes = env.step_distribution(s, a);
    let o = sample_index(outcomes.iter().map(|o| o.prob), rng);
    outcomes[o].next.clone()
}

/// A random pacman board: agent and ghost on distinct open cells with the
/// ghost at least `min_ghost_distance` maze steps away, and each food cell
/// kept with probability `food_density`. With `pill_eaten` the pill is gone
/// and the ghost edible for the full duration.
pub fn random_board(
    env: &EnvModel,
    rng: &mut impl Rng,
    min_ghost_distance: usize,
    food_density: f64,
    pill_eaten: bool,
) -> Result<GridState> {
    let params = env
        .minipac_params()
        .ok_or_else(|| Error::InvalidConfig("random boards need a pacman environment".into()))?;
    let layout = env.layout();
    let open: Vec<Pos> = layout.open_cells().collect();
    for _ in 0..10_000 {
        let agent = *open.choose(rng).expect("open cells");
        let ghost = *open.choose(rng).expect("open cells");
        let d = layout.bfs_distances(agent)[layout.offset(ghost)];
        if d.is_none_or(|d| d < min_ghost_distance.max(1)) {
            continue;
        }
        let mut food = 0u128;
        for p in env.food_cells() {
            if p != agent && rng.gen_bool(food_density) {
                food |= 1u128 << layout.offset(p);
            }
        }
        if food == 0 {
            continue;
        }
        let pill = env.pill_cell().is_some() && !pill_eaten && env.pill_cell() != Some(agent);
        let s = GridState {
            agent,
            ghost: Some(crate::env::Ghost { pos: ghost, heading: None }),
            food,
            pill,
            edible: if pill_eaten { params.edible_turns } else { 0 },
            status: Status::Playing,
        };
        return Ok(s);
    }
    Err(Error::InvalidConfig(format!("no board with the ghost {min_ghost_distance} steps away")))
}

/// Explanation of the local space of `root` within `horizon` moves.
pub fn local_explanation(
    env: &EnvModel,
    policy: &dyn Policy,
    root: &GridState,
    horizon: usize,
    params: &SsxParams,
) -> Result<Explanation> {
    let local = local_approximation(env, root, horizon, all_actions)?;
    explain(env, policy, local.into_space(), params, None)
}

/// Priority strategic state of the meta-state holding the root (id 0).
pub fn root_priority(expl: &Explanation) -> &GridState {
    let id = expl.priority_for(0).expect("every meta-state has a pick");
    expl.space.state(id)
}

/// One row per sampling fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingRow {
    pub fraction: f64,
    /// Mean displacement of the root's priority strategic state against
    /// the exact run.
    pub displacement: Displacement,
    /// Total count computation time over all roots, in seconds.
    pub count_seconds: f64,
    /// `count_seconds` over the exact total.
    pub time_ratio: f64,
}

/// Count computations timed per root and fraction; the minimum is kept.
const TIMING_REPEATS: usize = 7;

/// Reruns every root with sampled out-path counts at each fraction.
/// Displacements compare against the exact run. Timing reruns the count on
/// the exact run's partition, so every fraction times the same input.
pub fn sampling_study(
    env: &EnvModel,
    policy: &dyn Policy,
    roots: &[GridState],
    fractions: &[f64],
    horizon: usize,
    params: &SsxParams,
) -> Result<Vec<SamplingRow>> {
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(Error::InvalidConfig(format!("sampling fraction {f} outside (0, 1]")));
    }
    let exact_params = SsxParams { sample_fraction: 1.0, ..*params };
    let exact: Vec<Explanation> = roots
        .par_iter()
        .map(|r| local_explanation(env, policy, r, horizon, &exact_params))
        .collect::<Result<_>>()?;
    // Fractions are timed back to back within each repeat so drift in
    // machine load affects every fraction alike. Each root keeps its fastest
    // repeat per fraction.
    let timed: Vec<f64> = std::iter::once(1.0).chain(fractions.iter().copied()).collect();
    let mut seconds = vec![0.0; timed.len()];
    for e in &exact {
        let mut best = vec![Duration::MAX; timed.len()];
        for _ in 0..TIMING_REPEATS {
            for (b, &fraction) in best.iter_mut().zip(&timed) {
                let opts = SsxParams { sample_fraction: fraction, ..*params }.count_options();
                let start = Instant::now();
                out_path_counts(&e.pm, &e.partition.assignment, params.k, opts)?;
                *b = (*b).min(start.elapsed());
            }
        }
        for (s, b) in seconds.iter_mut().zip(&best) {
            *s += b.as_secs_f64();
        }
    }
    let exact_seconds = seconds[0];
    let mut rows = Vec::with_capacity(fractions.len());
    for (&fraction, &count_seconds) in fractions.iter().zip(&seconds[1..]) {
        let sampled_params = SsxParams { sample_fraction: fraction, ..*params };
        let dists: Vec<Displacement> = roots
            .par_iter()
            .zip(&exact)
            .map(|(r, e)| {
                let run = if fraction == 1.0 {
                    e.clone()
                } else {
                    local_explanation(env, policy, r, horizon, &sampled_params)?
                };
                Ok(board_distance(root_priority(e), root_priority(&run)))
            })
            .collect::<Result<_>>()?;
        rows.push(SamplingRow {
            fraction,
            displacement: Displacement::mean(&dists),
            count_seconds,
            time_ratio: count_seconds / exact_seconds,
        });
    }
    Ok(rows)
}

pub fn sampling_csv(rows: &[SamplingRow]) -> String {
    let mut out = String::from("fraction,agent_distance,ghost_distance,food_distance,count_seconds,time_ratio\n");
    for r in rows {
        let d = r.displacement;
        writeln!(out, "{},{},{},{},{},{}", r.fraction, d.agent, d.ghost, d.food, r.count_seconds, r.time_ratio)
            .expect("string write");
    }
    out
}

/// Pairwise mean distances between root priority states across horizons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonTable {
    pub horizons: Vec<usize>,
    /// `cells[i][j]` compares horizon `i` with horizon `j`; symmetric.
    pub cells: Vec<Vec<Displacement>>,
    pub roots: usize,
}

impl HorizonTable {
    pub fn entity(&self, pick: impl Fn(&Displacement) -> f64) -> Vec<Vec<f64>> {
        self.cells.iter().map(|row| row.iter().map(&pick).collect()).collect()
    }

    /// Mean of an entity over the upper triangle.
    pub fn off_diagonal_mean(&self, pick: impl Fn(&Displacement) -> f64) -> f64 {
        let (sum, n) = self.upper().fold((0.0, 0), |(s, n), (i, j)| (s + pick(&self.cells[i][j]), n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    /// Spearman correlation of `|N_i - N_j|` with an entity over the upper
    /// triangle.
    pub fn gap_correlation(&self, pick: impl Fn(&Displacement) -> f64) -> f64 {
        let (gaps, values): (Vec<f64>, Vec<f64>) = self
            .upper()
            .map(|(i, j)| (self.horizons[j].abs_diff(self.horizons[i]) as f64, pick(&self.cells[i][j])))
            .unzip();
        spearman(&gaps, &values)
    }

    fn upper(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.horizons.len();
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
    }

    /// One CSV block per entity, each a square table with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let entities: [(&str, fn(&Displacement) -> f64); 3] =
            [("agent", |d| d.agent), ("ghost", |d| d.ghost), ("food", |d| d.food)];
        for (name, pick) in entities {
            let header: Vec<String> = self.horizons.iter().map(|n| format!("N{n}")).collect();
            writeln!(out, "entity,N,{}", header.join(",")).expect("string write");
            for (i, row) in self.cells.iter().enumerate() {
                let vals: Vec<String> = row.iter().map(|d| pick(d).to_string()).collect();
                writeln!(out, "{name},{},{}", self.horizons[i], vals.join(",")).expect("string write");
            }
        }
        out
    }
}

/// Explains every root at every horizon and compares root priority states
/// across horizon pairs.
pub fn horizon_faithfulness(
    env: &EnvModel,
    policy: &dyn Policy,
    roots: &[GridState],
    horizons: &[usize],
    params: &SsxParams,
) -> Result<HorizonTable> {
    if horizons.is_empty() || horizons.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig("horizons must be non-empty and strictly ascending".into()));
    }
    let picks: Vec<Vec<GridState>> = roots
        .par_iter()
        .map(|r| {
            horizons
                .iter()
                .map(|&n| Ok(root_priority(&local_explanation(env, policy, r, n, params)?).clone()))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let h = horizons.len();
    let mut cells = vec![vec![Displacement::default(); h]; h];
    for i in 0..h {
        for j in i + 1..h {
            let d: Vec<Displacement> = picks.iter().map(|p| board_distance(&p[i], &p[j])).collect();
            cells[i][j] = Displacement::mean(&d);
            cells[j][i] = cells[i][j];
        }
    }
    Ok(HorizonTable { horizons: horizons.to_vec(), cells, roots: roots.len() })
}

/// Mean displacement of root priority states under food-removal perturbations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub mean: Displacement,
    pub trials: usize,
    pub food_removed: usize,
    pub seed: u64,
}

impl StabilityReport {
    pub fn to_csv(&self) -> String {
        format!(
            "entity,mean_distance,trials,food_removed,seed\nagent,{},{t},{f},{s}\nghost,{},{t},{f},{s}\nfood,{},{t},{f},{s}\n",
            self.mean.agent,
            self.mean.ghost,
            self.mean.food,
            t = self.trials,
            f = self.food_removed,
            s = self.seed
        )
    }
}

/// `root` with `count` distinct food cells removed at random.
pub fn remove_food(root: &GridState, count: usize, rng: &mut impl Rng) -> Result<GridState> {
    let present: Vec<u32> = (0..128).filter(|&b| root.food >> b & 1 == 1).collect();
    if count > present.len() {
        return Err(Error::InvalidConfig(format!("cannot remove {count} of {} food cells", present.len())));
    }
    let mut s = root.clone();
    for &b in present.choose_multiple(rng, count) {
        s.food &= !(1u128 << b);
    }
    Ok(s)
}

/// Compares each root's priority state against `n_perturbations` runs
/// from copies of the root with `n_food_removed` food cells taken away.
/// Perturbation `j` of root `i` draws from its own seeded stream.
#[allow(clippy::too_many_arguments)]
pub fn perturbation_stability(
    env: &EnvModel,
    policy: &dyn Policy,
    roots: &[GridState],
    n_perturbations: usize,
    n_food_removed: usize,
    horizon: usize,
    params: &SsxParams,
    seed: u64,
) -> Result<StabilityReport> {
    let per_root: Vec<Vec<Displacement>> = roots
        .par_iter()
        .enumerate()
        .map(|(i, root)| {
            let base = local_explanation(env, policy, root, horizon, params)?;
            let base_pick = root_priority(&base).clone();
            (0..n_perturbations)
                .map(|j| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream((i * n_perturbations + j) as u64);
                    let perturbed = remove_food(root, n_food_removed, &mut rng)?;
                    let run = local_explanation(env, policy, &perturbed, horizon, params)?;
                    Ok(board_distance(&base_pick, root_priority(&run)))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let all: Vec<Displacement> = per_root.into_iter().flatten().collect();
    Ok(StabilityReport { mean: Displacement::mean(&all), trials: all.len(), food_removed: n_food_removed, seed })
}

/// Mean unique local-state count per horizon `1..=n_max` over `roots`,
/// enumerating every action regardless of policy.
pub fn growth_study(env: &EnvModel, roots: &[GridState], n_max: usize) -> Result<Vec<(usize, f64)>> {
    if n_max < 1 || roots.is_empty() {
        return Err(Error::InvalidConfig("growth study needs roots and a maximum horizon of at least 1".into()));
    }
    let per_root: Vec<Vec<usize>> = roots
        .par_iter()
        .map(|r| Ok(local_approximation(env, r, n_max, all_actions)?.counts_by_depth()))
        .collect::<Result<_>>()?;
    Ok((1..=n_max)
        .map(|n| {
            let total: usize = per_root.iter().map(|c| c[n.min(c.len() - 1)]).sum();
            (n, total as f64 / roots.len() as f64)
        })
        .collect())
}

pub fn growth_csv(rows: &[(usize, f64)]) -> String {
    let mut out = String::from("N,mean_unique_states\n");
    for (n, c) in rows {
        writeln!(out, "{n},{c}").expect("string write");
    }
    out
}

/// Best clustering objective per meta-state count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSweep {
    pub rows: Vec<(usize, f64)>,
    /// Count with the largest second difference of the objective, when at
    /// least three counts were swept.
    pub knee: Option<usize>,
}

impl KSweep {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,objective,knee\n");
        for &(k, v) in &self.rows {
            writeln!(out, "{k},{v},{}", self.knee == Some(k)).expect("string write");
        }
        out
    }
}

/// Clusters with each `k` in `k_values`, embedding in `k` dimensions.
pub fn k_sweep(pm: &PathMatrix, k_values: &[usize], base: &ClusterOptions) -> Result<KSweep> {
    if k_values.is_empty() || k_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig("k values must be non-empty and strictly ascending".into()));
    }
    let rows: Vec<(usize, f64)> = k_values
        .iter()
        .map(|&k| {
            let emb = spectral_embed(pm, k)?;
            let p = cluster_meta_states(&emb, pm, &ClusterOptions { k, ..*base })?;
            Ok((k, p.objective))
        })
        .collect::<Result<_>>()?;
    Ok(KSweep { knee: knee(&rows), rows })
}

/// Interior point with the largest second difference `f(i-1) - 2 f(i) + f(i+1)`.
pub fn knee(rows: &[(usize, f64)]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for w in rows.windows(3) {
        let second = w[0].1 - 2.0 * w[1].1 + w[2].1;
        if best.is_none_or(|(_, b)| second > b) {
            best = Some((w[1].0, second));
        }
    }
    best.map(|(k, _)| k)
}

/// Average ranks, ties sharing the mean of their positions (1-based).
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation; zero when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}
