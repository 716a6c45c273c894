//! Meta-states: spectral embedding of the path-likelihood graph followed by
//! k-means regularised by out-path counts.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pathgraph::{out_path_counts, CountOptions, OutPathCounts, PathMatrix};

/// Above this many states the embedding uses Lanczos instead of a dense
/// eigendecomposition.
pub const DENSE_EIGEN_LIMIT: usize = 600;

/// Single moves evaluated exactly once no batch of reassignments helps.
const SINGLE_MOVE_TRIALS: usize = 16;

/// Each state's row of the `k` lowest Laplacian eigenvectors, normalised to
/// unit length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralEmbedding {
    n: usize,
    k: usize,
    coords: Vec<f64>,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
}

impl SpectralEmbedding {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != k) {
            return Err(Error::Dimension { expected: k, got: r.len() });
        }
        Ok(SpectralEmbedding { n, k, coords: rows.concat(), eigenvalues: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.coords[s * self.k..(s + 1) * self.k]
    }

    /// Same embedding with rows reordered so that new row `i` is old row
    /// `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let coords = perm.iter().flat_map(|&p| self.row(p).iter().copied()).collect();
        SpectralEmbedding { coords, ..self.clone() }
    }
}

/// Symmetrised path-likelihood affinity `(g + g^T) / 2` with a zero
/// diagonal; states with no affinity to anything get a self-loop of one.
pub fn affinity(pm: &PathMatrix) -> Vec<f64> {
    let n = pm.len();
    let mut w = vec![0.0; n * n];
    w.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, row)| {
        for (j, x) in row.iter_mut().enumerate() {
            if i != j {
                *x = 0.5 * (pm.likelihood(i, j) + pm.likelihood(j, i));
            }
        }
        if row.iter().all(|&x| x == 0.0) {
            row[i] = 1.0;
        }
    });
    w
}

/// `D^{-1/2} W D^{-1/2}`; the Laplacian is `I` minus this.
fn normalised_affinity(pm: &PathMatrix) -> Vec<f64> {
    let n = pm.len();
    let mut w = affinity(pm);
    let inv_sqrt: Vec<f64> = w
        .chunks(n.max(1))
        .map(|row| 1.0 / row.iter().sum::<f64>().sqrt())
        .collect();
    w.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, row)| {
        for (j, x) in row.iter_mut().enumerate() {
            *x *= inv_sqrt[i] * inv_sqrt[j];
        }
    });
    w
}

/// Symmetric normalised Laplacian of the affinity graph, dense.
pub fn laplacian(pm: &PathMatrix) -> DMatrix<f64> {
    let n = pm.len();
    let m = normalised_affinity(pm);
    DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - m[i * n + j])
}

/// Spectral embedding from the `k` smallest eigenpairs of the normalised
/// Laplacian.
pub fn spectral_embed(pm: &PathMatrix, k: usize) -> Result<SpectralEmbedding> {
    let n = pm.len();
    let (values, vecs) = laplacian_eigenpairs(pm, k)?;
    let eigenvalues = values.iter().map(|&x| x.max(0.0)).collect();
    let mut coords = vec![0.0; n * k];
    for s in 0..n {
        let row = &mut coords[s * k..(s + 1) * k];
        for (c, v) in row.iter_mut().zip(&vecs) {
            *c = v[s];
        }
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|x| *x /= norm);
        }
    }
    Ok(SpectralEmbedding { n, k, coords, eigenvalues })
}

/// Fixes the sign of an eigenvector so its largest-magnitude entry (first
/// on ties) is positive.
fn canonical_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() + 1e-12 {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// `k` largest eigenpairs of a dense symmetric matrix, descending.
fn dense_top(m: &[f64], n: usize, k: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(n, n, m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut values = Vec::with_capacity(k);
    let mut vecs = Vec::with_capacity(k);
    for &i in order.iter().take(k) {
        values.push(eig.eigenvalues[i]);
        let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
        canonical_sign(&mut v);
        vecs.push(v);
    }
    (values, vecs)
}

fn matvec(m: &[f64], n: usize, x: &[f64], out: &mut [f64]) {
    out.par_iter_mut().enumerate().for_each(|(i, o)| {
        *o = m[i * n..(i + 1) * n].iter().zip(x).map(|(a, b)| a * b).sum();
    });
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `k` largest eigenpairs by Lanczos with full reorthogonalisation. A
/// breakdown restarts from a fresh vector orthogonal to the basis, which
/// also recovers repeated eigenvalues.
fn lanczos_top(m: &[f64], n: usize, k: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    const TOL: f64 = 1e-10;
    let mut rng = ChaCha8Rng::seed_from_u64(0x1a2c_2055);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();

    let fresh = |basis: &[Vec<f64>], rng: &mut ChaCha8Rng| -> Option<Vec<f64>> {
        for _ in 0..5 {
            let mut v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
            for _ in 0..2 {
                for q in basis {
                    let c = dot(q, &v);
                    v.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
                }
            }
            let norm = dot(&v, &v).sqrt();
            if norm > 1e-8 {
                v.iter_mut().for_each(|x| *x /= norm);
                return Some(v);
            }
        }
        None
    };

    let mut q = fresh(&basis, &mut rng).expect("non-empty space");
    let mut w = vec![0.0; n];
    loop {
        matvec(m, n, &q, &mut w);
        let a = dot(&q, &w);
        basis.push(q);
        alpha.push(a);
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &w);
                w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let b = dot(&w, &w).sqrt();
        let j = basis.len();
        let check = j >= k && (j % 8 == 0 || b < 1e-10 || j == n);
        if check {
            let (vals, ritz, resid) = ritz_pairs(&alpha, &beta, b, k);
            if j == n || resid.iter().all(|&r| r < TOL) {
                let vecs = ritz
                    .iter()
                    .map(|y| {
                        let mut v = vec![0.0; n];
                        for (q, &c) in basis.iter().zip(y) {
                            v.iter_mut().zip(q).for_each(|(x, e)| *x += c * e);
                        }
                        let norm = dot(&v, &v).sqrt();
                        v.iter_mut().for_each(|x| *x /= norm);
                        canonical_sign(&mut v);
                        v
                    })
                    .collect();
                return Ok((vals, vecs));
            }
        }
        if j == n {
            return Err(Error::NotConverged { iters: j, residual: b });
        }
        if b < 1e-10 {
            beta.push(0.0);
            q = fresh(&basis, &mut rng).ok_or(Error::NotConverged { iters: j, residual: b })?;
        } else {
            beta.push(b);
            q = w.iter().map(|x| x / b).collect();
        }
    }
}

/// Top `k` Ritz values, their tridiagonal-basis vectors and residual bounds.
fn ritz_pairs(alpha: &[f64], beta: &[f64], last_beta: f64, k: usize) -> (Vec<f64>, Vec<Vec<f64>>, Vec<f64>) {
    let j = alpha.len();
    let t = DMatrix::from_fn(j, j, |r, c| {
        if r == c {
            alpha[r]
        } else if r + 1 == c {
            beta[r]
        } else if c + 1 == r {
            beta[c]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..j).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut vals = Vec::with_capacity(k);
    let mut vecs = Vec::with_capacity(k);
    let mut resid = Vec::with_capacity(k);
    for &i in order.iter().take(k) {
        vals.push(eig.eigenvalues[i]);
        let y: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
        resid.push((last_beta * y[j - 1]).abs());
        vecs.push(y);
    }
    (vals, vecs, resid)
}

/// Settings for [`cluster_meta_states`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterOptions {
    pub k: usize,
    /// Weight of the out-path term.
    pub eta: f64,
    /// Convergence threshold on the objective change; `None` means
    /// `1e-6` times the magnitude of the initial objective.
    pub eps_phi: Option<f64>,
    pub seed: u64,
    pub restarts: usize,
    /// Target sampling fraction for out-path counts.
    pub sample_fraction: f64,
    pub max_iters: usize,
    /// Divide counts by `|S|^2`. Off means raw counts.
    pub normalise_counts: bool,
    /// Weight each out-path by its likelihood instead of counting it once.
    pub weighted_counts: bool,
}

impl Default for ClusterOptions {
    fn default() -> Self {
        ClusterOptions {
            k: 4,
            eta: 1.0,
            eps_phi: None,
            seed: 0,
            restarts: 5,
            sample_fraction: 1.0,
            max_iters: 100,
            normalise_counts: true,
            weighted_counts: false,
        }
    }
}

/// Assignment of states to meta-states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaStatePartition {
    pub k: usize,
    pub assignment: Vec<usize>,
    /// `k` rows of embedding coordinates.
    pub centroids: Vec<Vec<f64>>,
    pub objective: f64,
    pub eta: f64,
    pub seed: u64,
    /// Objective after initialisation and after every accepted iteration.
    pub history: Vec<f64>,
    pub iterations: usize,
    /// Restart that produced this partition.
    pub restart: usize,
}

impl MetaStatePartition {
    pub fn members(&self, meta: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&s| self.assignment[s] == meta).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &m in &self.assignment {
            sizes[m] += 1;
        }
        sizes
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("partition serialises")
    }
}

pub fn centroids(emb: &SpectralEmbedding, assignment: &[usize], k: usize) -> Vec<Vec<f64>> {
    let mut sum = vec![vec![0.0; emb.dim()]; k];
    let mut count = vec![0usize; k];
    for (s, &m) in assignment.iter().enumerate() {
        count[m] += 1;
        for (c, x) in sum[m].iter_mut().zip(emb.row(s)) {
            *c += x;
        }
    }
    for (c, &n) in sum.iter_mut().zip(&count) {
        if n > 0 {
            c.iter_mut().for_each(|x| *x /= n as f64);
        }
    }
    sum
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Evaluates assignments against one embedding and path matrix, with the
/// count sampling seed held fixed so the objective is a function of the
/// assignment alone.
struct Evaluator<'a> {
    emb: &'a SpectralEmbedding,
    /// Absent for plain k-means.
    pm: Option<&'a PathMatrix>,
    k: usize,
    eta: f64,
    counts: CountOptions,
    scale: f64,
}

impl Evaluator<'_> {
    fn counts(&self, assignment: &[usize]) -> Result<Option<OutPathCounts>> {
        match self.pm {
            Some(pm) if self.eta != 0.0 => out_path_counts(pm, assignment, self.k, self.counts).map(Some),
            _ => Ok(None),
        }
    }

    fn cost(&self, s: usize, meta: usize, centroids: &[Vec<f64>], counts: Option<&OutPathCounts>) -> f64 {
        let d = sq_dist(self.emb.row(s), &centroids[meta]);
        match counts {
            Some(c) => d - self.eta * c.get(s, meta) * self.scale,
            None => d,
        }
    }

    fn objective(&self, assignment: &[usize]) -> Result<f64> {
        let counts = self.counts(assignment)?;
        let cents = centroids(self.emb, assignment, self.k);
        Ok((0..assignment.len())
            .map(|s| self.cost(s, assignment[s], &cents, counts.as_ref()))
            .sum())
    }
}

fn check_inputs(emb: &SpectralEmbedding, n: usize, k: usize) -> Result<()> {
    if emb.len() != n {
        return Err(Error::Dimension { expected: n, got: emb.len() });
    }
    if k == 0 || k > n {
        return Err(Error::InvalidConfig(format!("k = {k} must be in [1, {n}]")));
    }
    Ok(())
}

/// Objective value of an assignment: squared embedding distance to the
/// meta-state centroid minus `eta` times the (optionally normalised)
/// out-path count, summed over states.
pub fn objective(
    emb: &SpectralEmbedding,
    pm: &PathMatrix,
    assignment: &[usize],
    k: usize,
    eta: f64,
    counts: CountOptions,
    normalise_counts: bool,
) -> Result<f64> {
    check_inputs(emb, pm.len(), k)?;
    if assignment.len() != pm.len() {
        return Err(Error::Dimension { expected: pm.len(), got: assignment.len() });
    }
    let n = pm.len() as f64;
    let scale = if normalise_counts { 1.0 / (n * n) } else { 1.0 };
    Evaluator { emb, pm: Some(pm), k, eta, counts, scale }.objective(assignment)
}

/// Random balanced start: a seeded permutation dealt round-robin.
fn initial_assignment(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut assignment = vec![0; n];
    for (pos, &s) in perm.iter().enumerate() {
        assignment[s] = pos % k;
    }
    assignment
}

fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

/// Moves the farthest state into each empty meta-state, in meta-state order.
fn repair_empty(emb: &SpectralEmbedding, assignment: &mut [usize], k: usize) {
    loop {
        let mut sizes = vec![0usize; k];
        for &m in assignment.iter() {
            sizes[m] += 1;
        }
        let Some(empty) = sizes.iter().position(|&c| c == 0) else {
            return;
        };
        let cents = centroids(emb, assignment, k);
        let mut best: Option<(usize, f64)> = None;
        for s in 0..assignment.len() {
            if sizes[assignment[s]] < 2 {
                continue;
            }
            let d = sq_dist(emb.row(s), &cents[assignment[s]]);
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((s, d));
            }
        }
        let Some((s, _)) = best else { return };
        assignment[s] = empty;
    }
}

fn argmin_meta(costs: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (m, c) in costs.enumerate() {
        if c < best.1 {
            best = (m, c);
        }
    }
    best
}

/// Every (state, other meta-state) move ordered by predicted change in
/// cost, best first, truncated to [`SINGLE_MOVE_TRIALS`].
fn ranked_single_moves(
    ev: &Evaluator,
    assignment: &[usize],
    cents: &[Vec<f64>],
    counts: Option<&OutPathCounts>,
) -> Vec<(usize, usize)> {
    let mut all: Vec<(usize, usize, f64)> = (0..assignment.len())
        .flat_map(|s| {
            let here = ev.cost(s, assignment[s], cents, counts);
            (0..ev.k)
                .filter(move |&m| m != assignment[s])
                .map(move |m| (s, m, here - ev.cost(s, m, cents, counts)))
        })
        .collect();
    all.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    all.into_iter().take(SINGLE_MOVE_TRIALS).map(|(s, m, _)| (s, m)).collect()
}

struct Run {
    assignment: Vec<usize>,
    objective: f64,
    history: Vec<f64>,
    iterations: usize,
}

fn run_once(ev: &Evaluator, seed: u64, restart: usize, max_iters: usize, eps: Option<f64>) -> Result<Run> {
    let n = ev.emb.len();
    let k = ev.k;
    let mut rng = restart_rng(seed, restart);
    let mut assignment = initial_assignment(n, k, &mut rng);
    let mut xi = ev.objective(&assignment)?;
    let eps = eps.unwrap_or_else(|| (1e-6 * xi.abs()).max(1e-12));
    let mut history = vec![xi];
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let counts = ev.counts(&assignment)?;
        let cents = centroids(ev.emb, &assignment, k);
        // (state, new meta, predicted improvement)
        let moves: Vec<(usize, usize, f64)> = (0..n)
            .into_par_iter()
            .filter_map(|s| {
                let here = ev.cost(s, assignment[s], &cents, counts.as_ref());
                let (m, c) = argmin_meta((0..k).map(|m| ev.cost(s, m, &cents, counts.as_ref())));
                (m != assignment[s] && c < here).then_some((s, m, here - c))
            })
            .collect();
        let mut ranked = moves;
        ranked.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
        // Accept the largest prefix of moves, halving on failure, that
        // does not raise the objective.
        let mut take = ranked.len();
        let mut accepted: Option<(Vec<usize>, f64)> = None;
        while take > 0 {
            let mut candidate = assignment.clone();
            for &(s, m, _) in &ranked[..take] {
                candidate[s] = m;
            }
            repair_empty(ev.emb, &mut candidate, k);
            let value = ev.objective(&candidate)?;
            if value <= xi {
                accepted = Some((candidate, value));
                break;
            }
            take /= 2;
        }
        // Predicted costs ignore how a move shifts centroids and counts, so
        // before giving up evaluate the best-predicted single moves exactly,
        // including ones not predicted to help.
        if accepted.is_none() {
            for (s, m) in ranked_single_moves(ev, &assignment, &cents, counts.as_ref()) {
                let mut candidate = assignment.clone();
                candidate[s] = m;
                repair_empty(ev.emb, &mut candidate, k);
                let value = ev.objective(&candidate)?;
                if value < xi {
                    accepted = Some((candidate, value));
                    break;
                }
            }
        }
        let Some((next, value)) = accepted else { break };
        let delta = xi - value;
        let unchanged = next == assignment;
        assignment = next;
        xi = value;
        history.push(xi);
        if unchanged || delta < eps {
            break;
        }
    }
    Ok(Run { assignment, objective: xi, history, iterations })
}

/// Regularised spectral clustering into `opts.k` meta-states, best of
/// `opts.restarts` seeded runs by final objective.
///
/// Every iteration recomputes out-path counts once for the current
/// assignment, reassigns each state to the meta-state minimising its
/// distance term minus the weighted count, and accepts the batch only if
/// the true objective does not increase; otherwise it retries with the
/// better-predicted half of the moves. When no batch helps, the
/// best-predicted single moves are evaluated exactly. The history is
/// therefore non-increasing.
pub fn cluster_meta_states(
    emb: &SpectralEmbedding,
    pm: &PathMatrix,
    opts: &ClusterOptions,
) -> Result<MetaStatePartition> {
    let n = pm.len();
    check_inputs(emb, n, opts.k)?;
    if opts.eta < 0.0 || !opts.eta.is_finite() {
        return Err(Error::InvalidConfig(format!("eta must be non-negative, got {}", opts.eta)));
    }
    if opts.eps_phi.is_some_and(|e| e <= 0.0) {
        return Err(Error::InvalidConfig("eps_phi must be positive".into()));
    }
    if opts.restarts == 0 {
        return Err(Error::InvalidConfig("restarts must be at least 1".into()));
    }
    let nf = n as f64;
    let ev = Evaluator {
        emb,
        pm: Some(pm),
        k: opts.k,
        eta: opts.eta,
        counts: CountOptions { sample_fraction: opts.sample_fraction, seed: opts.seed, weighted: opts.weighted_counts },
        scale: if opts.normalise_counts { 1.0 / (nf * nf) } else { 1.0 },
    };
    let mut best: Option<(usize, Run)> = None;
    for r in 0..opts.restarts {
        let run = run_once(&ev, opts.seed, r, opts.max_iters, opts.eps_phi)?;
        if best.as_ref().is_none_or(|(_, b)| run.objective < b.objective) {
            best = Some((r, run));
        }
    }
    let (restart, run) = best.expect("at least one restart");
    Ok(MetaStatePartition {
        k: opts.k,
        centroids: centroids(emb, &run.assignment, opts.k),
        assignment: run.assignment,
        objective: run.objective,
        eta: opts.eta,
        seed: opts.seed,
        history: run.history,
        iterations: run.iterations,
        restart,
    })
}

/// k-means on the embedding: the clustering loop of
/// [`cluster_meta_states`] with no out-path term. Returns the best
/// assignment over restarts and its inertia.
pub fn kmeans(
    emb: &SpectralEmbedding,
    k: usize,
    seed: u64,
    restarts: usize,
    max_iters: usize,
    eps: Option<f64>,
) -> Result<(Vec<usize>, f64)> {
    let n = emb.len();
    check_inputs(emb, n, k)?;
    let ev = Evaluator { emb, pm: None, k, eta: 0.0, counts: CountOptions::default(), scale: 1.0 };
    let mut best: Option<Run> = None;
    for r in 0..restarts.max(1) {
        let run = run_once(&ev, seed, r, max_iters, eps)?;
        if best.as_ref().is_none_or(|b| run.objective < b.objective) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one restart");
    Ok((best.assignment, best.objective))
}

/// `|L v - lambda v| / |v|`.
pub fn eigen_residual(l: &DMatrix<f64>, value: f64, vector: &[f64]) -> f64 {
    let v = DVector::from_column_slice(vector);
    (l * &v - value * &v).norm() / v.norm()
}

/// The `k` smallest Laplacian eigenpairs, ascending, before row
/// normalisation. Eigenvector signs are fixed so the largest-magnitude
/// entry is positive.
pub fn laplacian_eigenpairs(pm: &PathMatrix, k: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = pm.len();
    if k < 1 || k > n {
        return Err(Error::InvalidConfig(format!("embedding dimension {k} not in [1, {n}]")));
    }
    let m = normalised_affinity(pm);
    let (mu, vecs) = if n <= DENSE_EIGEN_LIMIT { dense_top(&m, n, k) } else { lanczos_top(&m, n, k)? };
    Ok((mu.iter().map(|&x| 1.0 - x).collect(), vecs))
}

#[cfg(test)]
pub(crate) fn lanczos_for_tests(pm: &PathMatrix, k: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let m = normalised_affinity(pm);
    let (mu, vecs) = lanczos_top(&m, pm.len(), k)?;
    Ok((mu.iter().map(|&x| 1.0 - x).collect(), vecs))
}

#[cfg(test)]
mod tests;
