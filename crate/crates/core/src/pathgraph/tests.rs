use std::collections::HashSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::env::{default_minipac, four_rooms_env, Pos, RewardScheme};
use crate::policy::{induce_transition_model, value_iteration};
use crate::testutil::{chain, random_model};

/// Floyd–Warshall over the same edge weights.
fn floyd_warshall(model: &TransitionModel) -> Vec<Vec<f64>> {
    let n = model.len();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for s in 0..n {
        d[s][s] = 0.0;
        for &(t, p) in model.support(s) {
            if t != s && p >= MIN_EDGE_LIKELIHOOD {
                d[s][t] = d[s][t].min(-p.ln());
            }
        }
    }
    for m in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][m] + d[m][j] < d[i][j] {
                    d[i][j] = d[i][m] + d[m][j];
                }
            }
        }
    }
    d
}

fn path_cost(model: &TransitionModel, nodes: &[usize]) -> f64 {
    nodes.windows(2).map(|w| -model.likelihood(w[0], w[1]).ln()).sum()
}

#[test]
fn three_chain_costs_and_path() {
    let model = chain(3, 0.5);
    let pm = build_gamma(&model).unwrap();
    assert!((pm.cost(0, 2) - 2.0 * 2f64.ln()).abs() < 1e-12);
    assert!((pm.likelihood(0, 2) - 0.25).abs() < 1e-12);
    assert_eq!(pm.path_nodes(0, 2).unwrap(), vec![0, 1, 2]);
    assert_eq!(pm.path_nodes(1, 1).unwrap(), vec![1]);
    assert!(matches!(pm.path_nodes(2, 0), Err(Error::NoPath { from: 2, to: 0 })));
    assert_eq!(pm.likelihood(2, 0), 0.0);
    assert!(pm.path_nodes(0, 3).is_err());
}

#[test]
fn diagonal_is_empty_path() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pm = build_gamma(&random_model(12, 3, &mut rng)).unwrap();
    for s in 0..12 {
        assert_eq!(pm.cost(s, s), 0.0);
        assert_eq!(pm.likelihood(s, s), 1.0);
        assert_eq!(pm.pred(s, s), None);
    }
}

#[test]
fn matches_floyd_warshall_on_random_models() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for trial in 0..50 {
        let n = 5 + trial % 11;
        let model = random_model(n, 1 + trial % 4, &mut rng);
        let pm = build_gamma(&model).unwrap();
        let oracle = floyd_warshall(&model);
        for i in 0..n {
            for j in 0..n {
                let (a, b) = (pm.cost(i, j), oracle[i][j]);
                assert!(a == b || (a - b).abs() <= 1e-9, "trial {trial} ({i},{j}): {a} vs {b}");
                if a.is_finite() {
                    let nodes = pm.path_nodes(i, j).unwrap();
                    assert_eq!(nodes[0], i);
                    assert_eq!(*nodes.last().unwrap(), j);
                    assert!((path_cost(&model, &nodes) - a).abs() <= 1e-9);
                }
            }
        }
    }
}

#[test]
fn triangle_inequality_holds_exhaustively() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = random_model(14, 3, &mut rng);
    let pm = build_gamma(&model).unwrap();
    for a in 0..14 {
        for b in 0..14 {
            for c in 0..14 {
                assert!(pm.cost(a, c) <= pm.cost(a, b) + pm.cost(b, c) + 1e-12);
            }
        }
    }
}

#[test]
fn ties_prefer_lower_predecessor() {
    // diamond 0 -> {1, 2} -> 3 with equal likelihoods
    let model = TransitionModel::from_rows(vec![
        vec![(2, 0.5), (1, 0.5)],
        vec![(3, 1.0)],
        vec![(3, 1.0)],
        vec![(3, 1.0)],
    ])
    .unwrap();
    let pm = build_gamma(&model).unwrap();
    assert_eq!(pm.path_nodes(0, 3).unwrap(), vec![0, 1, 3]);

}

#[test]
fn negligible_edges_are_dropped() {
    let model = TransitionModel::from_rows(vec![vec![(0, 1.0 - 1e-13), (1, 1e-13)], vec![(1, 1.0)]]).unwrap();
    let pm = build_gamma(&model).unwrap();
    assert_eq!(pm.cost(0, 1), f64::INFINITY);
}

#[test]
fn raising_an_edge_likelihood_never_lowers_path_likelihood() {
    let base = build_gamma(&chain(5, 0.3)).unwrap();
    let rows: Vec<Vec<(usize, f64)>> = (0..5)
        .map(|i| match i {
            2 => vec![(2, 0.1), (3, 0.9)],
            4 => vec![(4, 1.0)],
            _ => vec![(i, 0.7), (i + 1, 0.3)],
        })
        .collect();
    let raised = build_gamma(&TransitionModel::from_rows(rows).unwrap()).unwrap();
    for a in 0..5 {
        for b in 0..5 {
            assert!(raised.likelihood(a, b) >= base.likelihood(a, b));
        }
    }
    assert!(raised.likelihood(0, 4) > base.likelihood(0, 4));
}

#[test]
fn cache_round_trip_and_rejection() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let model = random_model(9, 3, &mut rng);
    let pm = build_gamma(&model).unwrap();
    let mut bytes = Vec::new();
    pm.write_to(&mut bytes).unwrap();
    assert_eq!(&bytes[..8], b"SSXGAMMA");
    assert_eq!(bytes.len(), 24 + 81 * 12);
    assert_eq!(PathMatrix::read_from(bytes.as_slice()).unwrap(), pm);
    assert!(matches!(PathMatrix::read_from(&bytes[..100]), Err(Error::Cache(_))));
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(PathMatrix::read_from(bad.as_slice()).is_err());

    let dir = tempfile::tempdir().unwrap();
    let first = build_gamma_cached(&model, Some(dir.path())).unwrap();
    assert!(cache_path(dir.path(), &model).exists());
    let second = build_gamma_cached(&model, Some(dir.path())).unwrap();
    assert_eq!(first, pm);
    assert_eq!(second, pm);
}

/// Literal out-path count over explicit path node lists.
fn count_oracle(pm: &PathMatrix, assignment: &[usize], k: usize, weighted: bool) -> Vec<Vec<f64>> {
    let n = pm.len();
    let mut c = vec![vec![0.0; k]; n];
    for s in 0..n {
        let phi = assignment[s];
        for a in (0..n).filter(|&a| a != s && assignment[a] == phi) {
            for b in (0..n).filter(|&b| assignment[b] != phi) {
                if let Ok(nodes) = pm.path_nodes(a, b) {
                    if nodes.contains(&s) {
                        c[s][phi] += if weighted { pm.likelihood(a, b) } else { 1.0 };
                    }
                }
            }
        }
    }
    c
}

#[test]
fn single_meta_state_has_no_out_paths() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pm = build_gamma(&random_model(10, 3, &mut rng)).unwrap();
    let c = out_path_counts(&pm, &[0; 10], 1, CountOptions::default()).unwrap();
    assert!(c.table().iter().all(|&x| x == 0.0));
}

#[test]
fn three_chain_counts() {
    let pm = build_gamma(&chain(3, 0.5)).unwrap();
    let c = out_path_counts(&pm, &[0, 0, 1], 2, CountOptions::default()).unwrap();
    assert_eq!(c.get(1, 0), 1.0, "path 0->2 passes through 1");
    assert_eq!(c.get(0, 0), 0.0, "no path from 1 leaves through 0");
    assert_eq!(c.get(2, 1), 0.0);
}

#[test]
fn own_meta_state_counts_match_literal_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for trial in 0..20 {
        let n = 8 + trial % 7;
        let k = 2 + trial % 3;
        let pm = build_gamma(&random_model(n, 2 + trial % 2, &mut rng)).unwrap();
        let assignment: Vec<usize> = (0..n).map(|i| (i * 7 + trial) % k).collect();
        for weighted in [false, true] {
            let c = out_path_counts(&pm, &assignment, k, CountOptions { weighted, ..Default::default() }).unwrap();
            let oracle = count_oracle(&pm, &assignment, k, weighted);
            for s in 0..n {
                let phi = assignment[s];
                assert!((c.get(s, phi) - oracle[s][phi]).abs() < 1e-9, "trial {trial} state {s}");
            }
        }
    }
}

#[test]
fn foreign_counts_are_counts_after_joining() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 11;
    let pm = build_gamma(&random_model(n, 3, &mut rng)).unwrap();
    let assignment: Vec<usize> = (0..n).map(|i| i % 3).collect();
    let c = out_path_counts(&pm, &assignment, 3, CountOptions::default()).unwrap();
    for s in 0..n {
        for phi in (0..3).filter(|&m| m != assignment[s]) {
            let mut expected = 0.0;
            for a in (0..n).filter(|&a| assignment[a] == phi) {
                for b in (0..n).filter(|&b| b != s && assignment[b] != phi) {
                    if let Ok(nodes) = pm.path_nodes(a, b) {
                        if nodes.contains(&s) {
                            expected += 1.0;
                        }
                    }
                }
            }
            assert_eq!(c.get(s, phi), expected);
        }
    }
}

#[test]
fn count_errors() {
    let pm = build_gamma(&chain(3, 0.5)).unwrap();
    assert!(matches!(
        out_path_counts(&pm, &[0, 1], 2, CountOptions::default()),
        Err(Error::Dimension { expected: 3, got: 2 })
    ));
    assert!(out_path_counts(&pm, &[0, 1, 2], 2, CountOptions::default()).is_err());
    let zero = CountOptions { sample_fraction: 0.0, ..Default::default() };
    assert!(out_path_counts(&pm, &[0, 0, 1], 2, zero).is_err());
}

#[test]
fn sampled_counts_are_unbiased() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 30;
    let pm = build_gamma(&random_model(n, 3, &mut rng)).unwrap();
    let assignment: Vec<usize> = (0..n).map(|i| i % 3).collect();
    let exact = out_path_counts(&pm, &assignment, 3, CountOptions::default()).unwrap();
    let mut mean = vec![0.0; n * 3];
    for seed in 0..200 {
        let opts = CountOptions { sample_fraction: 0.5, seed, weighted: false };
        let c = out_path_counts(&pm, &assignment, 3, opts).unwrap();
        for (m, x) in mean.iter_mut().zip(c.table()) {
            *m += x / 200.0;
        }
    }
    let mut checked = 0;
    for s in 0..n {
        let phi = assignment[s];
        let e = exact.get(s, phi);
        if e >= 20.0 {
            checked += 1;
            let m = mean[s * 3 + phi];
            assert!((m - e).abs() <= 0.05 * e, "state {s}: mean {m} exact {e}");
        }
    }
    assert!(checked > 0);
}

#[test]
fn full_fraction_is_exact_and_counts_are_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let pm = build_gamma(&random_model(20, 3, &mut rng)).unwrap();
    let assignment: Vec<usize> = (0..20).map(|i| i % 2).collect();
    let exact = out_path_counts(&pm, &assignment, 2, CountOptions::default()).unwrap();
    let full = CountOptions { sample_fraction: 1.0, seed: 99, weighted: false };
    assert_eq!(out_path_counts(&pm, &assignment, 2, full).unwrap(), exact);
    let half = CountOptions { sample_fraction: 0.5, seed: 3, weighted: true };
    let a = out_path_counts(&pm, &assignment, 2, half).unwrap();
    let b = out_path_counts(&pm, &assignment, 2, half).unwrap();
    assert_eq!(a.table(), b.table());
    assert_eq!(sample_targets(20, 0.5, 3).len(), 10);
}

#[test]
fn multi_word_rows_match_oracle_on_sampled_targets() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let n = 130;
    let k = 3;
    let pm = build_gamma(&random_model(n, 2, &mut rng)).unwrap();
    let assignment: Vec<usize> = (0..n).map(|i| (i / 7) % k).collect();
    let mut nonzero = 0;
    for (fraction, weighted) in [(1.0, false), (0.5, true), (0.3, false)] {
        let opts = CountOptions { sample_fraction: fraction, seed: 4, weighted };
        let c = out_path_counts(&pm, &assignment, k, opts).unwrap();
        let targets: HashSet<usize> = sample_targets(n, fraction, 4).into_iter().collect();
        let scale = n as f64 / targets.len() as f64;
        for s in (0..n).step_by(9) {
            let phi = assignment[s];
            let mut expected = 0.0;
            for a in (0..n).filter(|&a| a != s && assignment[a] == phi) {
                for &b in targets.iter().filter(|&&b| assignment[b] != phi) {
                    if let Ok(nodes) = pm.path_nodes(a, b) {
                        if nodes.contains(&s) {
                            expected += if weighted { pm.likelihood(a, b) } else { 1.0 };
                        }
                    }
                }
            }
            let got = c.get(s, phi);
            assert!((got - scale * expected).abs() < 1e-9 * (1.0 + got.abs()), "fraction {fraction} state {s}");
            nonzero += (expected > 0.0) as usize;
        }
    }
    assert!(nonzero >= 10, "only {nonzero} non-zero checks");
}

#[test]
fn counts_do_not_depend_on_thread_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 300;
    let pm = build_gamma(&random_model(n, 3, &mut rng)).unwrap();
    let assignment: Vec<usize> = (0..n).map(|i| (i * 5) % 4).collect();
    let opts = CountOptions { sample_fraction: 0.6, seed: 2, weighted: true };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| out_path_counts(&pm, &assignment, 4, opts).unwrap())
    };
    let one = run(1);
    assert_eq!(one.table(), run(4).table());
}

#[test]
fn four_rooms_doorways_carry_most_out_paths() {
    let env = four_rooms_env(11, Pos::new(0, 10)).unwrap();
    let space = crate::env::enumerate_reachable(&env, &GridState::at(Pos::new(10, 0)), 1000).unwrap();
    let (_, policy) = value_iteration(&env, &space, 0.95, 1e-10, 10_000, 0.1).unwrap();
    let model = induce_transition_model(&env, &policy, &space).unwrap();
    let pm = build_gamma(&model).unwrap();
    let fr = env.four_rooms().unwrap();
    let room = |p: Pos| {
        fr.room_of(p).unwrap_or_else(|| {
            let i = fr.doors.iter().position(|&d| d == p).unwrap();
            fr.door_rooms()[i].0
        })
    };
    let assignment: Vec<usize> = space.states().iter().map(|s| room(s.agent)).collect();
    let c = out_path_counts(&pm, &assignment, 4, CountOptions::default()).unwrap();
    for r in 0..4 {
        let members: Vec<usize> = (0..space.len()).filter(|&i| assignment[i] == r).collect();
        let best = *members
            .iter()
            .max_by(|&&a, &&b| c.get(a, r).total_cmp(&c.get(b, r)))
            .unwrap();
        let p = space.state(best).agent;
        let doorway = fr.doors.iter().any(|d| d.manhattan(p) <= 1);
        assert!(doorway, "room {r} argmax at {p}");
    }
}

#[test]
fn local_space_covers_four_rooms_beyond_diameter() {
    let env = four_rooms_env(11, Pos::new(0, 10)).unwrap();
    let local = local_approximation(&env, &GridState::at(Pos::new(10, 0)), 40, all_actions).unwrap();
    assert_eq!(local.len(), 104);
    assert!(local.space().boundary_flags().iter().all(|&b| !b));
    let small = local_approximation(&env, &GridState::at(Pos::new(10, 0)), 2, all_actions).unwrap();
    assert_eq!(small.len(), 6);
    assert_eq!(small.counts_by_depth(), vec![1, 3, 6]);
    assert!(small.space().boundary_flags().iter().any(|&b| b));
}

#[test]
fn minipac_one_step_local_space() {
    let env = default_minipac(RewardScheme::Eat);
    let local = local_approximation(&env, &env.start_state(), 1, all_actions).unwrap();
    assert!(local.len() < 16);
    assert!(local.len() > 1);
    assert_eq!(local.root(), 0);
    assert_eq!(local.space().state(0), &env.start_state());
    assert!(matches!(
        local_approximation(&env, &env.start_state(), 0, all_actions),
        Err(Error::InvalidConfig(_))
    ));
}

#[test]
fn minipac_local_space_is_closed_off_boundary() {
    let env = default_minipac(RewardScheme::Hunt);
    let local = local_approximation(&env, &env.start_state(), 4, all_actions).unwrap();
    let encodings: HashSet<String> = local.space().states().iter().map(|s| env.encode(s)).collect();
    assert_eq!(encodings.len(), local.len());
    for id in 0..local.len() {
        assert!(local.depth(id) <= 4);
        if !local.space().is_boundary(id) {
            for a in 0..5 {
                for o in env.step_distribution(local.space().state(id), a) {
                    assert!(local.space().id_of(&o.next).is_some());
                }
            }
        }
    }
    let counts = local.counts_by_depth();
    assert_eq!(counts.len(), 5);
    assert!(counts.windows(2).all(|w| w[0] <= w[1]));
    assert!(counts[4] < 5usize.pow(4));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn reconstructed_paths_have_matrix_cost(seed in any::<u64>(), n in 2usize..12, deg in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_model(n, deg, &mut rng);
        let pm = build_gamma(&model).unwrap();
        for a in 0..n {
            for b in 0..n {
                if pm.cost(a, b).is_finite() {
                    let nodes = pm.path_nodes(a, b).unwrap();
                    prop_assert!((path_cost(&model, &nodes) - pm.cost(a, b)).abs() <= 1e-9);
                } else {
                    prop_assert_eq!(pm.likelihood(a, b), 0.0);
                }
            }
        }
    }
}
