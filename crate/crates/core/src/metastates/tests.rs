use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::env::{enumerate_reachable, four_rooms_env, GridState, Pos};
use crate::pathgraph::build_gamma;
use crate::policy::{induce_transition_model, value_iteration};
use crate::testutil::random_model;

/// Cyclic Jacobi rotations; returns all eigenvalues ascending.
fn jacobi_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| a[(i, j)]).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut values: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    values.sort_by(f64::total_cmp);
    values
}

/// Two groups with path likelihood `inner` inside a group and no paths
/// across.
fn two_cliques(sizes: (usize, usize), inner: f64) -> PathMatrix {
    let n = sizes.0 + sizes.1;
    let group = |i: usize| (i >= sizes.0) as usize;
    let mut cost = vec![f64::INFINITY; n * n];
    let mut pred = vec![-1; n * n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                cost[i * n + j] = 0.0;
            } else if group(i) == group(j) {
                cost[i * n + j] = -inner.ln();
                pred[i * n + j] = i as i32;
            }
        }
    }
    PathMatrix::from_parts(n, cost, pred).unwrap()
}

fn random_pm(n: usize, seed: u64) -> PathMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    build_gamma(&random_model(n, 3, &mut rng)).unwrap()
}

#[test]
fn eigenvalues_match_jacobi_oracle() {
    let pm = random_pm(12, 11);
    let l = laplacian(&pm);
    let oracle = jacobi_eigenvalues(&l);
    let (values, vectors) = laplacian_eigenpairs(&pm, 12).unwrap();
    for (i, (a, b)) in values.iter().zip(&oracle).enumerate() {
        assert!((a - b).abs() < 1e-6, "eigenvalue {i}: {a} vs {b}");
    }
    for (v, x) in values.iter().zip(&vectors) {
        assert!(eigen_residual(&l, *v, x) <= 1e-6);
    }
}

#[test]
fn lanczos_agrees_with_dense_solver() {
    for (n, seed) in [(60, 1), (90, 2), (150, 3)] {
        let pm = random_pm(n, seed);
        let (dense, _) = laplacian_eigenpairs(&pm, 5).unwrap();
        let (lanczos, vecs) = lanczos_for_tests(&pm, 5).unwrap();
        let l = laplacian(&pm);
        for i in 0..5 {
            assert!((dense[i] - lanczos[i]).abs() < 1e-8, "n={n} eigenvalue {i}");
            assert!(eigen_residual(&l, lanczos[i], &vecs[i]) <= 1e-6);
        }
    }
}

#[test]
fn embedding_eigenvalues_are_ascending_and_non_negative() {
    let emb = spectral_embed(&random_pm(20, 4), 4).unwrap();
    assert!(emb.eigenvalues.iter().all(|&x| x >= 0.0));
    assert!(emb.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    for s in 0..20 {
        let norm: f64 = emb.row(s).iter().map(|x| x * x).sum();
        assert!((norm - 1.0).abs() < 1e-9);
    }
}

#[test]
fn disconnected_cliques_separate() {
    let pm = two_cliques((4, 5), 0.5);
    let emb = spectral_embed(&pm, 2).unwrap();
    assert!(emb.eigenvalues[0].abs() < 1e-9);
    assert!(emb.eigenvalues[1].abs() < 1e-9);
    let d = |a: usize, b: usize| sq_dist(emb.row(a), emb.row(b));
    for i in 0..9 {
        for j in 0..9 {
            if (i < 4) == (j < 4) {
                assert!(d(i, j) < 1e-12);
            } else {
                assert!(d(i, j) > 0.5);
            }
        }
    }
}

#[test]
fn complete_graph_has_constant_leading_eigenvector() {
    let n = 7;
    let cost = (0..n * n).map(|i| if i / n == i % n { 0.0 } else { 1.0 }).collect();
    let pred = (0..n * n).map(|i| if i / n == i % n { -1 } else { (i / n) as i32 }).collect();
    let pm = PathMatrix::from_parts(n, cost, pred).unwrap();
    let (values, vectors) = laplacian_eigenpairs(&pm, 2).unwrap();
    assert!(values[0].abs() < 1e-12);
    let v0 = &vectors[0];
    assert!(v0.iter().all(|&x| (x - v0[0]).abs() < 1e-12));
}

#[test]
fn isolated_states_get_a_self_loop() {
    let n = 3;
    let cost = (0..9).map(|i| if i / 3 == i % 3 { 0.0 } else { f64::INFINITY }).collect();
    let pm = PathMatrix::from_parts(n, cost, vec![-1; 9]).unwrap();
    let w = affinity(&pm);
    assert_eq!(w, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    let emb = spectral_embed(&pm, 3).unwrap();
    assert!(emb.eigenvalues.iter().all(|x| x.abs() < 1e-12));
}

fn opts(k: usize, eta: f64, seed: u64) -> ClusterOptions {
    ClusterOptions { k, eta, seed, ..Default::default() }
}

#[test]
fn cliques_are_recovered_for_any_eta() {
    let pm = two_cliques((5, 4), 0.6);
    let emb = spectral_embed(&pm, 2).unwrap();
    for eta in [0.0, 0.5, 5.0] {
        let p = cluster_meta_states(&emb, &pm, &opts(2, eta, 3)).unwrap();
        let first = p.assignment[0];
        for s in 0..9 {
            assert_eq!(p.assignment[s] == first, s < 5, "eta {eta}");
        }
    }
}

#[test]
fn zero_eta_matches_plain_kmeans() {
    for seed in 0..10 {
        let pm = random_pm(25, 100 + seed);
        let emb = spectral_embed(&pm, 3).unwrap();
        let p = cluster_meta_states(&emb, &pm, &opts(3, 0.0, seed)).unwrap();
        let (a, inertia) = kmeans(&emb, 3, seed, 5, 100, None).unwrap();
        assert_eq!(p.assignment, a, "seed {seed}");
        assert!((p.objective - inertia).abs() < 1e-12);
    }
}

#[test]
fn degenerate_objectives() {
    let pm = random_pm(5, 5);
    let same = SpectralEmbedding::from_rows(vec![vec![0.3, 0.4]; 5]).unwrap();
    let v = objective(&same, &pm, &[0, 1, 0, 1, 0], 2, 0.0, CountOptions::default(), true).unwrap();
    assert!(v.abs() < 1e-15);
    let one = two_cliques((1, 0), 1.0);
    let emb = SpectralEmbedding::from_rows(vec![vec![1.0]]).unwrap();
    assert_eq!(objective(&emb, &one, &[0], 1, 2.0, CountOptions::default(), true).unwrap(), 0.0);
}

#[test]
fn invalid_options_are_rejected() {
    let pm = random_pm(5, 6);
    let emb = spectral_embed(&pm, 2).unwrap();
    assert!(cluster_meta_states(&emb, &pm, &opts(6, 1.0, 0)).is_err());
    assert!(cluster_meta_states(&emb, &pm, &opts(2, -1.0, 0)).is_err());
    let zero_eps = ClusterOptions { eps_phi: Some(0.0), ..opts(2, 1.0, 0) };
    assert!(cluster_meta_states(&emb, &pm, &zero_eps).is_err());
    assert!(spectral_embed(&pm, 0).is_err());
    assert!(spectral_embed(&pm, 6).is_err());
}

/// Exhaustive minimum over assignments with every meta-state non-empty.
fn brute_force_k2(emb: &SpectralEmbedding, pm: &PathMatrix, eta: f64) -> f64 {
    let n = pm.len();
    let mut best = f64::INFINITY;
    for mask in 1..(1u32 << n) - 1 {
        let a: Vec<usize> = (0..n).map(|s| (mask >> s & 1) as usize).collect();
        best = best.min(objective(emb, pm, &a, 2, eta, CountOptions::default(), true).unwrap());
    }
    best
}

#[test]
fn near_brute_force_optimum_on_small_instances() {
    for trial in 0..20u64 {
        let n = 6 + (trial % 3) as usize;
        let pm = random_pm(n, 200 + trial);
        let emb = spectral_embed(&pm, 2).unwrap();
        let p = cluster_meta_states(&emb, &pm, &opts(2, 1.0, trial)).unwrap();
        let best = brute_force_k2(&emb, &pm, 1.0);
        assert!(p.objective >= best - 1e-12);
        let gap = (p.objective - best) / best.abs();
        println!("trial {trial}: n={n} algorithm {:.6} optimum {best:.6} gap {gap:.4}", p.objective);
        assert!(p.objective <= best + 0.1 * best.abs() + 1e-12, "trial {trial}: {} vs {best}", p.objective);
    }
}

#[test]
fn clustering_is_seed_deterministic() {
    let pm = random_pm(30, 7);
    let emb = spectral_embed(&pm, 3).unwrap();
    let a = cluster_meta_states(&emb, &pm, &opts(3, 2.0, 9)).unwrap();
    let b = cluster_meta_states(&emb, &pm, &opts(3, 2.0, 9)).unwrap();
    assert_eq!(a, b);
    assert!(a.sizes().iter().all(|&c| c > 0));
}

#[test]
fn relabelling_states_permutes_the_partition() {
    let pm = two_cliques((4, 4), 0.5);
    let emb = spectral_embed(&pm, 2).unwrap();
    let perm = [7, 2, 5, 0, 3, 6, 1, 4];
    let p = cluster_meta_states(&emb, &pm, &opts(2, 0.0, 1)).unwrap();
    let q = cluster_meta_states(&emb.permuted(&perm), &pm, &opts(2, 0.0, 5)).unwrap();
    for i in 0..8 {
        for j in 0..8 {
            let same_p = p.assignment[perm[i]] == p.assignment[perm[j]];
            let same_q = q.assignment[i] == q.assignment[j];
            assert_eq!(same_p, same_q);
        }
    }
}

#[test]
fn partition_json_round_trip() {
    let pm = random_pm(10, 8);
    let emb = spectral_embed(&pm, 2).unwrap();
    let p = cluster_meta_states(&emb, &pm, &opts(2, 1.0, 2)).unwrap();
    let back: MetaStatePartition = serde_json::from_value(p.to_json()).unwrap();
    assert_eq!(back, p);
    assert!(p.to_json().get("history").is_some());
}

#[test]
fn four_rooms_meta_states_follow_rooms() {
    let env = four_rooms_env(11, Pos::new(0, 10)).unwrap();
    let space = enumerate_reachable(&env, &GridState::at(Pos::new(10, 0)), 1000).unwrap();
    let (_, policy) = value_iteration(&env, &space, 0.95, 1e-10, 10_000, 0.1).unwrap();
    let pm = build_gamma(&induce_transition_model(&env, &policy, &space).unwrap()).unwrap();
    let emb = spectral_embed(&pm, 4).unwrap();
    let p = cluster_meta_states(&emb, &pm, &opts(4, 1.0, 0)).unwrap();
    let fr = env.four_rooms().unwrap();
    let mut majority = 0;
    let mut total = 0;
    for m in 0..4 {
        let mut per_room = [0usize; 4];
        for s in p.members(m) {
            if let Some(r) = fr.room_of(space.state(s).agent) {
                per_room[r] += 1;
                total += 1;
            }
        }
        majority += per_room.iter().max().unwrap();
    }
    let purity = majority as f64 / total as f64;
    assert!(purity >= 0.9, "purity {purity}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]
    #[test]
    fn objective_history_never_increases(seed in any::<u64>(), n in 6usize..30, k in 2usize..5, eta in 0.0f64..5.0) {
        let pm = random_pm(n, seed);
        let emb = spectral_embed(&pm, k.min(n)).unwrap();
        let p = cluster_meta_states(&emb, &pm, &ClusterOptions { k, eta, seed, normalise_counts: seed % 2 == 0, ..Default::default() }).unwrap();
        for w in p.history.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9);
        }
        prop_assert!((p.history.last().unwrap() - p.objective).abs() < 1e-12);
        prop_assert!(p.sizes().iter().all(|&c| c > 0));
    }
}
