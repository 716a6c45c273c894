//! Random instances shared by unit tests.

use rand::Rng;

use crate::policy::TransitionModel;

/// Random row-stochastic model with `out_degree` distinct successors per
/// state (self-loops allowed).
pub fn random_model(n: usize, out_degree: usize, rng: &mut impl Rng) -> TransitionModel {
    let rows = (0..n)
        .map(|_| {
            let targets = rand::seq::index::sample(rng, n, out_degree.min(n)).into_vec();
            let w: Vec<f64> = targets.iter().map(|_| rng.gen::<f64>() + 0.05).collect();
            let total: f64 = w.iter().sum();
            targets.into_iter().zip(w).map(|(t, x)| (t, x / total)).collect()
        })
        .collect();
    TransitionModel::from_rows(rows).unwrap()
}

/// Chain `0 -> 1 -> ... -> n-1` with forward likelihood `p`, remainder on
/// the self-loop, last state absorbing.
pub fn chain(n: usize, p: f64) -> TransitionModel {
    let rows = (0..n)
        .map(|i| if i + 1 < n { vec![(i, 1.0 - p), (i + 1, p)] } else { vec![(i, 1.0)] })
        .collect();
    TransitionModel::from_rows(rows).unwrap()
}
