use cdit::analysis::{enumerate_pure_policies, exact_nashconv, exact_utility};
use cdit::cdit::InfoSetKey;
use cdit::cfr::{solve_escfr, BehaviorPolicy, SolveConfig};
use cdit::exploit::*;
use cdit::model::games;
use cdit::model::{ContinuousTag, Posg};
use cdit::seeding::rng_from;
use rand::Rng;

fn random_behavior(player: usize, horizon: usize, seed: u64) -> BehaviorPolicy {
    let mut rng = rng_from(seed);
    let mut b = BehaviorPolicy::uniform(player, 2);
    let mut stack = vec![InfoSetKey::root(player)];
    while let Some(k) = stack.pop() {
        if k.depth() < horizon {
            for a in 0..2 {
                for o in 0..2 {
                    stack.push(k.child(a, o));
                }
            }
        }
        let x: f64 = rng.random_range(0.1..0.9);
        b.insert(k, vec![x, 1.0 - x]).unwrap();
    }
    b
}

#[test]
fn deterministic_game_has_exact_return() {
    let g = games::constant_reward_game(3, 0.5);
    let pols = [BehaviorPolicy::uniform(0, 1), BehaviorPolicy::uniform(1, 1)];
    let v = rollout_value(&g, &pols, 3, 50, 1).unwrap();
    assert_eq!(v[0].mean, 1.875);
    assert_eq!(v[0].std_error, 0.0);
    assert_eq!(v[1].mean, -1.875);
}

#[test]
fn rollout_matches_exact_utility() {
    let g = games::tiny_game();
    let pols = [random_behavior(0, 2, 1), random_behavior(1, 2, 2)];
    let exact = exact_utility(&g, &pols[0], &pols[1], 2).unwrap();
    let v = rollout_value(&g, &pols, 2, 10_000, 3).unwrap();
    for p in 0..2 {
        assert!((v[p].mean - exact[p]).abs() <= 3.0 * v[p].std_error, "{:?} vs {exact:?}", v[p]);
    }
}

#[test]
fn tag_rollouts_sum_to_zero() {
    let tag = ContinuousTag::default();
    let pols = [BehaviorPolicy::uniform(0, 6), BehaviorPolicy::uniform(1, 6)];
    let v = rollout_value(&tag, &pols, 5, 10_000, 4).unwrap();
    let se = (v[0].std_error.powi(2) + v[1].std_error.powi(2)).sqrt();
    assert!((v[0].mean + v[1].mean).abs() <= 3.0 * se.max(1e-12));
    assert!(v[0].mean > 0.0);
}

fn tiny_params(g: &impl Posg) -> PomcpParams {
    PomcpParams::for_model(g, 2)
}

#[test]
fn pomcp_approaches_exact_best_response() {
    let g = games::tiny_game();
    let frozen = random_behavior(1, 2, 7);
    let catalog = enumerate_pure_policies(g.spec(), 0, 2).unwrap();
    let best = catalog
        .iter()
        .map(|s| exact_utility(&g, s, &frozen, 2).unwrap()[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let br = pomcp_best_response(&g, &frozen, 0, &tiny_params(&g), 2, 1000, 8).unwrap();
    assert!(br.mean >= best - 0.05 - 3.0 * br.std_error, "exact {best}, POMCP {br:?}");
    // Never much worse than the frozen opponent's partner policy itself.
    let own = random_behavior(0, 2, 9);
    let selfplay = exact_utility(&g, &own, &frozen, 2).unwrap()[0];
    assert!(br.mean >= selfplay - 3.0 * br.std_error);
}

#[test]
fn equilibrium_snapshot_is_unexploitable() {
    let g = games::matching_pennies(0);
    let pols = [BehaviorPolicy::uniform(0, 2), BehaviorPolicy::uniform(1, 2)];
    let point = exploitability(&g, &pols, &PomcpParams::for_model(&g, 0), 0, 2000, 10).unwrap();
    for e in &point.exploitability {
        assert!(e.mean <= 0.05, "{e:?}");
        assert!(e.mean >= -3.0 * e.std_error);
    }
}

#[test]
fn estimated_nashconv_tracks_exact() {
    let g = games::tiny_game();
    let pols = vec![random_behavior(0, 2, 11), random_behavior(1, 2, 12)];
    let exact = exact_nashconv(&g, &pols, 2).unwrap().nashconv;
    let point = exploitability(&g, &pols, &tiny_params(&g), 2, 1000, 13).unwrap();
    assert!((point.nashconv.mean - exact).abs() <= 3.0 * point.nashconv.std_error + 0.05, "exact {exact}, {:?}", point.nashconv);
    for e in &point.exploitability {
        assert!(e.mean >= -3.0 * e.std_error);
    }
}

#[test]
fn nashconv_estimate_falls_with_iterations() {
    let g = games::tiny_game();
    let cfg = SolveConfig::new(50, 2, 10_000, 14).with_snapshots(vec![100, 10_000]);
    let mut snaps = Vec::new();
    solve_escfr(&g, &cfg, |s| snaps.push(s.clone())).unwrap();
    let curve = exploitability_curve(&g, &snaps, &tiny_params(&g), 2, 300, 15).unwrap();
    assert_eq!(curve[0].iteration, 100);
    assert!(curve[1].nashconv.mean < curve[0].nashconv.mean);
}

#[test]
fn estimates_are_reproducible() {
    let g = games::tiny_game();
    let pols = vec![random_behavior(0, 2, 16), random_behavior(1, 2, 17)];
    let mut params = tiny_params(&g);
    params.simulations = 100;
    let a = exploitability(&g, &pols, &params, 2, 50, 18).unwrap();
    let b = exploitability(&g, &pols, &params, 2, 50, 18).unwrap();
    assert_eq!(a, b);
}
