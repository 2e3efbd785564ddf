use std::collections::HashMap;

use cdit::analysis::*;
use cdit::cdit::{Cdit, InfoSetKey, Storage};
use cdit::cfr::{BehaviorPolicy, Policy};
use cdit::model::games;
use cdit::model::Posg;
use cdit::seeding::{derive_all, rng_from};
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;

fn random_simplex<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|x| x / total).collect()
}

fn random_matrix<R: Rng>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-scale..=scale))
}

#[test]
fn lemma1_random_matrix_trials() {
    let mut rng = rng_from(1);
    for _ in 0..1000 {
        let a = NormalFormGame::new(random_matrix(4, 4, 1.0, &mut rng), random_matrix(4, 4, 1.0, &mut rng)).unwrap();
        let e = [random_matrix(4, 4, 0.1, &mut rng), random_matrix(4, 4, 0.1, &mut rng)];
        let ahat = NormalFormGame::new(a.payoff(0) - &e[0], a.payoff(1) - &e[1]).unwrap();
        let pi = vec![random_simplex(4, &mut rng), random_simplex(4, &mut rng)];
        let r = lemma1_check(&a, &ahat, &pi).unwrap();
        assert!(r.all_hold, "{r:?}");
    }
}

#[test]
fn lemma1_zero_error_is_tight() {
    let mut rng = rng_from(2);
    let a = NormalFormGame::zero_sum(random_matrix(3, 3, 1.0, &mut rng));
    let pi = vec![random_simplex(3, &mut rng), random_simplex(3, &mut rng)];
    let r = lemma1_check(&a, &a, &pi).unwrap();
    assert!(r.all_hold);
    assert_eq!(r.lhs, r.rhs_tight);
}

#[test]
fn lemma1_with_particle_estimates() {
    let game = games::tiny_game();
    let catalogs = [
        enumerate_pure_policies(game.spec(), 0, 2).unwrap(),
        enumerate_pure_policies(game.spec(), 1, 2).unwrap(),
    ];
    let exact = exact_payoff_matrix(&game, &catalogs, 2).unwrap();
    let mut rng = rng_from(3);
    for trial in 0..10 {
        let mut tree = Cdit::with_seed(&game, 10, 2, derive_all(3, &[trial]), Storage::Full).unwrap();
        let est = estimated_payoff_matrix(&mut tree, &game, &catalogs).unwrap();
        for _ in 0..10 {
            let pi = vec![random_simplex(128, &mut rng), random_simplex(128, &mut rng)];
            let r = lemma1_check(&exact, &est, &pi).unwrap();
            assert!(r.all_hold, "{r:?}");
        }
    }
}

#[test]
fn deviation_incentive_two_ways() {
    let mut rng = rng_from(4);
    for _ in 0..200 {
        let g = NormalFormGame::zero_sum(random_matrix(3, 3, 1.0, &mut rng));
        let pi = vec![random_simplex(3, &mut rng), random_simplex(3, &mut rng)];
        for i in 0..2 {
            let m = deviation_incentive(&g, &pi, i);
            let l = deviation_incentive_loop(&g, &pi, i);
            assert!((m - l).abs() <= 1e-12);
            assert!(m >= -1e-9);
        }
    }
}

#[test]
fn tiny_game_payoffs_are_skew_symmetric() {
    let game = games::tiny_game();
    let catalogs = [
        enumerate_pure_policies(game.spec(), 0, 2).unwrap(),
        enumerate_pure_policies(game.spec(), 1, 2).unwrap(),
    ];
    assert_eq!(catalogs[0].len(), 128);
    let a = exact_payoff_matrix(&game, &catalogs, 2).unwrap();
    assert!(a.is_zero_sum(1e-9));
}

#[test]
fn behavior_and_mixture_nashconv_agree() {
    let game = games::tiny_game();
    let catalogs = [
        enumerate_pure_policies(game.spec(), 0, 2).unwrap(),
        enumerate_pure_policies(game.spec(), 1, 2).unwrap(),
    ];
    let a = exact_payoff_matrix(&game, &catalogs, 2).unwrap();
    let mut rng = rng_from(5);
    for _ in 0..5 {
        let pols: Vec<BehaviorPolicy> = (0..2)
            .map(|p| {
                let mut b = BehaviorPolicy::uniform(p, 2);
                let mut stack = vec![InfoSetKey::root(p)];
                while let Some(k) = stack.pop() {
                    if k.depth() < 2 {
                        for a in 0..2 {
                            for o in 0..2 {
                                stack.push(k.child(a, o));
                            }
                        }
                    }
                    b.insert(k, random_simplex(2, &mut rng)).unwrap();
                }
                b
            })
            .collect();
        let mix: Vec<Vec<f64>> = (0..2).map(|p| realization_weights(&catalogs[p], &pols[p])).collect();
        for m in &mix {
            assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let behavior = exact_nashconv_with(&game, &pols, &catalogs, 2).unwrap().nashconv;
        assert!((behavior - nashconv(&a, &mix)).abs() < 1e-9);
    }
}

#[test]
fn estimated_matrix_converges_in_particles() {
    let game = games::tiny_game().with_horizon(1);
    let catalogs = [
        enumerate_pure_policies(game.spec(), 0, 1).unwrap(),
        enumerate_pure_policies(game.spec(), 1, 1).unwrap(),
    ];
    let exact = exact_payoff_matrix(&game, &catalogs, 1).unwrap();
    let median_err = |c: usize| {
        let mut errs: Vec<f64> = (0..20)
            .map(|seed| {
                let mut tree = Cdit::with_seed(&game, c, 1, derive_all(6, &[seed]), Storage::Full).unwrap();
                let est = estimated_payoff_matrix(&mut tree, &game, &catalogs).unwrap();
                NormalFormGame::error_matrix(&exact, &est).unwrap().max_abs(0)
            })
            .collect();
        errs.sort_by(f64::total_cmp);
        errs[10]
    };
    let (e10, e1000) = (median_err(10), median_err(1000));
    assert!(e1000 < e10, "{e10} vs {e1000}");
}

#[test]
fn deterministic_single_state_estimate_is_exact() {
    let game = games::matching_pennies(1);
    let catalogs = [
        enumerate_pure_policies(game.spec(), 0, 1).unwrap(),
        enumerate_pure_policies(game.spec(), 1, 1).unwrap(),
    ];
    let exact = exact_payoff_matrix(&game, &catalogs, 1).unwrap();
    let mut tree = Cdit::with_seed(&game, 3, 1, 9, Storage::Full).unwrap();
    let est = estimated_payoff_matrix(&mut tree, &game, &catalogs).unwrap();
    assert_eq!(exact, est);
}

#[test]
fn tree_equivalent_policies_share_estimates() {
    let game = games::tiny_game();
    let mut tree = Cdit::with_seed(&game, 1, 2, 10, Storage::Full).unwrap();
    tree.expand_all(&game).unwrap();
    let catalogs = [
        enumerate_pure_policies(game.spec(), 0, 2).unwrap(),
        enumerate_pure_policies(game.spec(), 1, 2).unwrap(),
    ];
    let est = estimated_payoff_matrix(&mut tree, &game, &catalogs).unwrap();
    let tree_keys: Vec<InfoSetKey> = {
        let mut k: Vec<InfoSetKey> = tree.info_sets(0).cloned().collect();
        k.sort();
        k
    };
    let mut groups: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
    for (j, sigma) in catalogs[0].iter().enumerate() {
        let restriction: Vec<usize> = tree_keys.iter().map(|k| sigma.action(k)).collect();
        groups.entry(restriction).or_default().push(j);
    }
    assert!(groups.values().any(|g| g.len() > 1), "no equivalent pair to compare");
    for members in groups.values() {
        for &j in &members[1..] {
            assert_eq!(est.payoff(0).row(j), est.payoff(0).row(members[0]));
        }
    }
}

#[test]
fn catalog_sizes() {
    let fig = games::fig1_game();
    assert_eq!(enumerate_pure_policies(fig.spec(), 0, 1).unwrap().len(), 4);
    assert_eq!(enumerate_pure_policies(fig.spec(), 0, 0).unwrap().len(), 2);
    let tiny = games::tiny_game();
    let mut tree = Cdit::with_seed(&tiny, 2, 1, 12, Storage::Full).unwrap();
    tree.expand_all(&tiny).unwrap();
    let sur = enumerate_surrogate_policies(&tree, tiny.spec(), 0).unwrap();
    assert!(sur.len() <= 2usize.pow(1 + 2));
    assert!(!sur.is_empty());
    assert!(matches!(
        enumerate_pure_policies(games::tiny_game().spec(), 0, 4),
        Err(cdit::Error::EnumerationTooLarge { .. })
    ));
}

#[test]
fn exact_utility_examples() {
    let g = games::constant_reward_game(1, 0.5);
    let p = BehaviorPolicy::uniform(0, 1);
    let q = BehaviorPolicy::uniform(1, 1);
    assert_eq!(exact_utility(&g, &p, &q, 1).unwrap(), [1.5, -1.5]);
    let tiny = games::tiny_game();
    let u = exact_utility(&tiny, &BehaviorPolicy::uniform(0, 2), &BehaviorPolicy::uniform(1, 2), 2).unwrap();
    assert!((u[0] + u[1]).abs() < 1e-12);
}

#[test]
fn nashconv_is_sum_of_exploitabilities() {
    let tiny = games::tiny_game();
    let pols = [BehaviorPolicy::uniform(0, 2), BehaviorPolicy::uniform(1, 2)];
    let ex = exact_nashconv(&tiny, &pols, 2).unwrap();
    // e^i = v^i + BR^{-i} in a zero-sum game.
    let e0 = ex.values[0] + ex.best_responses[1];
    let e1 = ex.values[1] + ex.best_responses[0];
    assert!((ex.nashconv - (e0 + e1)).abs() < 1e-12);
    assert!(pols[0].probability(&InfoSetKey::root(0), 0) == 0.5);
}

proptest! {
    #[test]
    fn incentives_are_nonnegative(seed in any::<u64>(), n in 1usize..6, m in 1usize..6) {
        let mut rng = rng_from(seed);
        let g = NormalFormGame::new(random_matrix(n, m, 5.0, &mut rng), random_matrix(m, n, 5.0, &mut rng)).unwrap();
        let pi = vec![random_simplex(n, &mut rng), random_simplex(m, &mut rng)];
        prop_assert!(deviation_incentive(&g, &pi, 0) >= -1e-9);
        prop_assert!(deviation_incentive(&g, &pi, 1) >= -1e-9);
        prop_assert!(nashconv(&g, &pi) >= -1e-9);
    }
}
