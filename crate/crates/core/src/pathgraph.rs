//! Maximum-likelihood path structure of a policy-induced transition model.
//!
//! Edge `s -> t` carries weight `-ln f(s,t)`, so shortest paths are
//! maximum-likelihood paths. [`build_gamma`] runs one Dijkstra per source
//! and keeps a predecessor matrix from which paths, and out-path counts,
//! are recovered.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::env::{EnvModel, GridState, StateSpace};
use crate::error::{Error, Result};
use crate::policy::TransitionModel;

/// Likelihoods below this are treated as missing edges.
pub const MIN_EDGE_LIKELIHOOD: f64 = 1e-12;

/// Relative tolerance under which two path costs count as a tie.
const TIE_TOLERANCE: f64 = 1e-12;

const CACHE_MAGIC: &[u8; 8] = b"SSXGAMMA";

/// Sources per out-path counting task.
const COUNT_CHUNK: usize = 64;

/// All-pairs shortest-path costs and predecessors, row-major by source.
#[derive(Debug, Clone, PartialEq)]
pub struct PathMatrix {
    n: usize,
    cost: Vec<f64>,
    pred: Vec<i32>,
    /// Row-major reachability bits, `words(n)` u64 per row, derived from
    /// `cost`. Far smaller than `cost`, so scans over a target subset stay
    /// in cache.
    reach: Vec<u64>,
}

fn words(n: usize) -> usize {
    n.div_ceil(64)
}

impl PathMatrix {
    /// Builds a matrix from raw parts; `pred` uses -1 for "none".
    pub fn from_parts(n: usize, cost: Vec<f64>, pred: Vec<i32>) -> Result<Self> {
        if cost.len() != n * n {
            return Err(Error::Dimension { expected: n * n, got: cost.len() });
        }
        if pred.len() != n * n {
            return Err(Error::Dimension { expected: n * n, got: pred.len() });
        }
        Ok(PathMatrix::assemble(n, cost, pred))
    }

    fn assemble(n: usize, cost: Vec<f64>, pred: Vec<i32>) -> Self {
        let w = words(n);
        let mut reach = vec![0u64; n * w];
        if n > 0 {
            reach.par_chunks_mut(w).zip(cost.par_chunks(n)).for_each(|(bits, row)| {
                for (b, c) in row.iter().enumerate() {
                    bits[b / 64] |= (c.is_finite() as u64) << (b % 64);
                }
            });
        }
        PathMatrix { n, cost, pred, reach }
    }

    fn reach_row(&self, from: usize) -> &[u64] {
        let w = words(self.n);
        &self.reach[from * w..(from + 1) * w]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Path cost, `f64::INFINITY` when `to` is unreachable from `from`.
    pub fn cost(&self, from: usize, to: usize) -> f64 {
        self.cost[from * self.n + to]
    }

    /// Path likelihood `exp(-cost)`, zero when unreachable.
    pub fn likelihood(&self, from: usize, to: usize) -> f64 {
        (-self.cost(from, to)).exp()
    }

    /// Predecessor of `to` on the best path from `from`.
    pub fn pred(&self, from: usize, to: usize) -> Option<usize> {
        let p = self.pred[from * self.n + to];
        (p >= 0).then_some(p as usize)
    }

    pub fn cost_row(&self, from: usize) -> &[f64] {
        &self.cost[from * self.n..(from + 1) * self.n]
    }

    fn pred_row(&self, from: usize) -> &[i32] {
        &self.pred[from * self.n..(from + 1) * self.n]
    }

    /// Node sequence of the best path, both endpoints included.
    pub fn path_nodes(&self, from: usize, to: usize) -> Result<Vec<usize>> {
        for i in [from, to] {
            if i >= self.n {
                return Err(Error::IndexOutOfRange { index: i, len: self.n });
            }
        }
        if !self.cost(from, to).is_finite() {
            return Err(Error::NoPath { from, to });
        }
        let mut nodes = vec![to];
        let mut cur = to;
        while cur != from {
            cur = self.pred(from, cur).ok_or(Error::NoPath { from, to })?;
            nodes.push(cur);
            if nodes.len() > self.n {
                return Err(Error::InvalidModel(format!("predecessor cycle on path {from}->{to}")));
            }
        }
        nodes.reverse();
        Ok(nodes)
    }

    /// Writes the matrix in the binary cache format: magic, two u64
    /// dimensions, row-major f64 costs, row-major i32 predecessors, all
    /// little-endian.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let mut buf = Vec::with_capacity(24 + self.n * self.n * 12);
        buf.extend_from_slice(CACHE_MAGIC);
        buf.extend_from_slice(&(self.n as u64).to_le_bytes());
        buf.extend_from_slice(&(self.n as u64).to_le_bytes());
        for c in &self.cost {
            buf.extend_from_slice(&c.to_le_bytes());
        }
        for p in &self.pred {
            buf.extend_from_slice(&p.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        let bad = |what: &str| Error::Cache(what.to_string());
        if buf.len() < 24 || &buf[..8] != CACHE_MAGIC {
            return Err(bad("bad magic"));
        }
        let rows = u64::from_le_bytes(buf[8..16].try_into().unwrap()) as usize;
        let cols = u64::from_le_bytes(buf[16..24].try_into().unwrap()) as usize;
        if rows != cols {
            return Err(bad("non-square matrix"));
        }
        let cells = rows.checked_mul(cols).ok_or_else(|| bad("dimension overflow"))?;
        if buf.len() != 24 + cells * 12 {
            return Err(bad("truncated body"));
        }
        let body = &buf[24..];
        let cost = body[..cells * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let pred = body[cells * 8..]
            .chunks_exact(4)
            .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        PathMatrix::from_parts(rows, cost, pred)
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    cost: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    // min-heap on cost, then on node index
    fn cmp(&self, other: &Self) -> Ordering {
        other.cost.total_cmp(&self.cost).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn edge_weight(p: f64) -> f64 {
    (-p.ln()).max(0.0)
}

/// Weighted adjacency lists, self-loops and negligible edges dropped.
fn adjacency(model: &TransitionModel) -> Result<Vec<Vec<(usize, f64)>>> {
    (0..model.len())
        .map(|s| {
            let mut out = Vec::with_capacity(model.support(s).len());
            for &(t, p) in model.support(s) {
                if !(0.0..=1.0 + 1e-9).contains(&p) {
                    return Err(Error::InvalidModel(format!("likelihood {p} on edge {s}->{t}")));
                }
                if t != s && p >= MIN_EDGE_LIKELIHOOD {
                    out.push((t, edge_weight(p.min(1.0))));
                }
            }
            Ok(out)
        })
        .collect()
}

fn dijkstra(adj: &[Vec<(usize, f64)>], source: usize, cost: &mut [f64], pred: &mut [i32]) {
    cost.fill(f64::INFINITY);
    pred.fill(-1);
    let mut done = vec![false; adj.len()];
    cost[source] = 0.0;
    let mut heap = BinaryHeap::from([Entry { cost: 0.0, node: source }]);
    while let Some(Entry { cost: d, node: u }) = heap.pop() {
        if done[u] || d > cost[u] {
            continue;
        }
        done[u] = true;
        for &(v, w) in &adj[u] {
            if done[v] {
                continue;
            }
            let nd = d + w;
            let tol = TIE_TOLERANCE * nd.abs().max(cost[v].abs().min(f64::MAX));
            if nd < cost[v] - tol {
                cost[v] = nd;
                pred[v] = u as i32;
                heap.push(Entry { cost: nd, node: v });
            } else if (nd - cost[v]).abs() <= tol && (u as i32) < pred[v] {
                pred[v] = u as i32;
                if nd < cost[v] {
                    cost[v] = nd;
                    heap.push(Entry { cost: nd, node: v });
                }
            }
        }
    }
}

/// All-pairs maximum-likelihood paths. Rows are computed in parallel;
/// each row depends only on its source, so the result does not depend on
/// the thread count.
pub fn build_gamma(model: &TransitionModel) -> Result<PathMatrix> {
    let n = model.len();
    let adj = adjacency(model)?;
    let mut cost = vec![0.0; n * n];
    let mut pred = vec![0i32; n * n];
    if n > 0 {
        cost.par_chunks_mut(n)
            .zip(pred.par_chunks_mut(n))
            .enumerate()
            .for_each(|(s, (c, p))| dijkstra(&adj, s, c, p));
    }
    Ok(PathMatrix::assemble(n, cost, pred))
}

/// [`build_gamma`] backed by an on-disk cache keyed by the model's content
/// hash. Unreadable cache entries are rebuilt and overwritten.
pub fn build_gamma_cached(model: &TransitionModel, dir: Option<&Path>) -> Result<PathMatrix> {
    let Some(dir) = dir else {
        return build_gamma(model);
    };
    let path = cache_path(dir, model);
    if let Ok(file) = fs::File::open(&path) {
        if let Ok(pm) = PathMatrix::read_from(std::io::BufReader::new(file)) {
            if pm.len() == model.len() {
                return Ok(pm);
            }
        }
    }
    let pm = build_gamma(model)?;
    fs::create_dir_all(dir).map_err(|e| Error::Cache(format!("{}: {e}", dir.display())))?;
    let tmp = path.with_extension("tmp");
    let file = fs::File::create(&tmp).map_err(|e| Error::Cache(format!("{}: {e}", tmp.display())))?;
    pm.write_to(std::io::BufWriter::new(file))?;
    fs::rename(&tmp, &path).map_err(|e| Error::Cache(format!("{}: {e}", path.display())))?;
    Ok(pm)
}

pub fn cache_path(dir: &Path, model: &TransitionModel) -> PathBuf {
    dir.join(format!("{}.gamma", model.content_hash()))
}

/// Options for [`out_path_counts`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountOptions {
    /// Fraction of path targets visited, in `(0, 1]`.
    pub sample_fraction: f64,
    pub seed: u64,
    /// Weight each path by its likelihood instead of counting it once.
    pub weighted: bool,
}

impl Default for CountOptions {
    fn default() -> Self {
        CountOptions { sample_fraction: 1.0, seed: 0, weighted: false }
    }
}

/// Out-path counts `C(s, m)` for every state `s` and meta-state `m`, stored
/// row-major as `n x k`.
///
/// A path from `a` to `b` with `a` in `m` and `b` outside `m` contributes to
/// every node strictly between its endpoints. For `s` in `m` this is
/// exactly the count over paths leaving `m` from another member. For `s`
/// outside `m` it is the count `s` would collect on joining `m`, with
/// paths ending at `s` left out.
#[derive(Debug, Clone, PartialEq)]
pub struct OutPathCounts {
    n: usize,
    k: usize,
    table: Vec<f64>,
}

impl OutPathCounts {
    pub fn zeros(n: usize, k: usize) -> Self {
        OutPathCounts { n, k, table: vec![0.0; n * k] }
    }

    pub fn from_table(n: usize, k: usize, table: Vec<f64>) -> Result<Self> {
        if table.len() != n * k {
            return Err(Error::Dimension { expected: n * k, got: table.len() });
        }
        Ok(OutPathCounts { n, k, table })
    }

    pub fn get(&self, s: usize, meta: usize) -> f64 {
        self.table[s * self.k + meta]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.table[s * self.k..(s + 1) * self.k]
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    pub fn n_meta(&self) -> usize {
        self.k
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }
}

/// Seeded fixed-size uniform sample of target states, sorted. Every state is
/// included with probability `m / n`.
pub fn sample_targets(n: usize, fraction: f64, seed: u64) -> Vec<usize> {
    let m = sample_size(n, fraction);
    if m >= n {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, n, m).into_vec();
    picked.sort_unstable();
    picked
}

fn sample_size(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64).round() as usize).clamp(n.min(1), n)
}

/// Counts maximum-likelihood out-paths of every meta-state by walking
/// predecessors for each (source, target) pair. With `sample_fraction < 1`
/// only a seeded sample of targets is walked and the result is scaled by
/// `n / m`, which keeps it unbiased.
pub fn out_path_counts(
    pm: &PathMatrix,
    assignment: &[usize],
    k: usize,
    opts: CountOptions,
) -> Result<OutPathCounts> {
    let n = pm.len();
    if assignment.len() != n {
        return Err(Error::Dimension { expected: n, got: assignment.len() });
    }
    if let Some(&bad) = assignment.iter().find(|&&m| m >= k) {
        return Err(Error::IndexOutOfRange { index: bad, len: k });
    }
    if !(opts.sample_fraction > 0.0 && opts.sample_fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "sample fraction must be in (0,1], got {}",
            opts.sample_fraction
        )));
    }
    let targets = sample_targets(n, opts.sample_fraction, opts.seed);
    let scale = if targets.is_empty() { 0.0 } else { n as f64 / targets.len() as f64 };

    let w = words(n);
    let mut target_bits = vec![0u64; w];
    for &b in &targets {
        target_bits[b / 64] |= 1 << (b % 64);
    }
    // Per meta-state, the sampled targets outside it.
    let mut outside = vec![target_bits.clone(); k];
    for (b, &m) in assignment.iter().enumerate() {
        outside[m][b / 64] &= !(1 << (b % 64));
    }

    // Hits are applied in source order whether or not chunks run in
    // parallel, so the result does not depend on the thread count. A single
    // worker skips the pool and the hit buffers.
    let n_chunks = n.div_ceil(COUNT_CHUNK);
    let mut counts = OutPathCounts::zeros(n, k);
    if n_chunks > 1 && rayon::current_num_threads() > 1 {
        let chunks: Vec<Vec<(u32, f64)>> = (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let mut hits = Vec::new();
                walk_chunk(pm, assignment, &outside, k, opts.weighted, c, |cell, w| hits.push((cell as u32, w)));
                hits
            })
            .collect();
        for &(cell, w) in chunks.iter().flatten() {
            counts.table[cell as usize] += w;
        }
    } else {
        for c in 0..n_chunks {
            walk_chunk(pm, assignment, &outside, k, opts.weighted, c, |cell, w| counts.table[cell] += w);
        }
    }
    if scale != 1.0 {
        counts.table.iter_mut().for_each(|c| *c *= scale);
    }
    Ok(counts)
}

/// Walks every out-path from the sources in chunk `c`, reporting each
/// intermediate node as a table cell `node * k + meta` with its weight.
fn walk_chunk(
    pm: &PathMatrix,
    assignment: &[usize],
    outside: &[Vec<u64>],
    k: usize,
    weighted: bool,
    c: usize,
    mut hit: impl FnMut(usize, f64),
) {
    for a in c * COUNT_CHUNK..((c + 1) * COUNT_CHUNK).min(pm.len()) {
        let meta = assignment[a];
        let cost = pm.cost_row(a);
        let pred = pm.pred_row(a);
        for (i, (&r, &o)) in pm.reach_row(a).iter().zip(&outside[meta]).enumerate() {
            let mut bits = r & o;
            while bits != 0 {
                let b = i * 64 + bits.trailing_zeros() as usize;
                bits &= bits - 1;
                let w = if weighted { (-cost[b]).exp() } else { 1.0 };
                // b is reachable, so the chain ends at a.
                let mut cur = pred[b] as usize;
                while cur != a {
                    hit(cur * k + meta, w);
                    cur = pred[cur] as usize;
                }
            }
        }
    }
}

/// States within `horizon` composite moves of a root.
#[derive(Debug, Clone)]
pub struct LocalStateSpace {
    space: StateSpace,
    depth: Vec<usize>,
    horizon: usize,
}

impl LocalStateSpace {
    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn into_space(self) -> StateSpace {
        self.space
    }

    /// The root always has id 0.
    pub fn root(&self) -> usize {
        0
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.is_empty()
    }

    /// BFS depth of each state.
    pub fn depth(&self, id: usize) -> usize {
        self.depth[id]
    }

    /// Number of unique states within `n` moves, for every `n <= horizon`.
    pub fn counts_by_depth(&self) -> Vec<usize> {
        let mut counts = vec![0; self.horizon + 1];
        for &d in &self.depth {
            counts[d] += 1;
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        counts
    }
}

/// Every action index, the default support for local expansion.
pub fn all_actions(env: &EnvModel, _s: &GridState) -> Vec<usize> {
    (0..env.actions().len()).collect()
}

/// Breadth-first expansion of `root` to depth `horizon` under the actions
/// returned by `support` and every positive-probability outcome, in
/// action-then-outcome order. Any state with a successor outside the set,
/// under any action, is flagged as boundary.
pub fn local_approximation(
    env: &EnvModel,
    root: &GridState,
    horizon: usize,
    support: impl Fn(&EnvModel, &GridState) -> Vec<usize>,
) -> Result<LocalStateSpace> {
    if horizon == 0 {
        return Err(Error::InvalidConfig("local horizon must be at least 1".into()));
    }
    if !env.is_valid(root) {
        return Err(Error::UnknownState(env.encode(root)));
    }
    let mut space = StateSpace::new();
    let mut depth = vec![0];
    space.insert(root.clone(), false);
    let mut queue = VecDeque::from([0usize]);
    while let Some(id) = queue.pop_front() {
        let s = space.state(id).clone();
        if depth[id] == horizon || env.is_absorbing(&s) {
            continue;
        }
        for a in support(env, &s) {
            for o in env.step_distribution(&s, a) {
                if o.prob > 0.0 && space.id_of(&o.next).is_none() {
                    let j = space.insert(o.next, false);
                    depth.push(depth[id] + 1);
                    queue.push_back(j);
                }
            }
        }
    }
    for id in 0..space.len() {
        let s = space.state(id);
        let cut = !env.is_absorbing(s)
            && (0..env.actions().len()).any(|a| {
                env.step_distribution(s, a)
                    .iter()
                    .any(|o| space.id_of(&o.next).is_none())
            });
        space.set_boundary(id, cut);
    }
    Ok(LocalStateSpace { space, depth, horizon })
}

#[cfg(test)]
mod tests;
