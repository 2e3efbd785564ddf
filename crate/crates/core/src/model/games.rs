//! Shipped finite games for oracle testing.

use rand::Rng;

use super::{DiscreteOracleGame, PosgSpec};

fn spec(actions: &[usize], observations: &[usize], horizon: usize, discount: f64) -> PosgSpec {
    PosgSpec {
        num_players: actions.len(),
        action_counts: actions.to_vec(),
        observation_counts: observations.to_vec(),
        horizon,
        discount,
        reward_bounds: vec![(0.0, 0.0); actions.len()],
    }
}

fn one_hot(len: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[i] = 1.0;
    v
}

/// Matching pennies repeated over `horizon + 1` steps: one state, no
/// information, player 0 wins 1 on a match.
pub fn matching_pennies(horizon: usize) -> DiscreteOracleGame {
    let s = spec(&[2, 2], &[1, 1], horizon, 1.0);
    let reward = (0..4)
        .map(|ja| {
            let (a0, a1) = (ja / 2, ja % 2);
            let r = if a0 == a1 { 1.0 } else { -1.0 };
            vec![r, -r]
        })
        .collect();
    DiscreteOracleGame::new(
        "matching-pennies",
        s,
        1,
        vec![1.0],
        vec![vec![1.0]; 4],
        vec![vec![vec![1.0]; 4], vec![vec![1.0]; 4]],
        reward,
    )
    .expect("matching pennies is well formed")
}

/// The shipped two-state oracle game (|S| = 2, |A^i| = 2, |O^i| = 2, D = 2).
///
/// Player 0 scores by naming the hidden state and by matching player 1's
/// action; player 1 steers the state (`s' = s xor a1` w.p. 0.8). Player 0
/// sees the next state correctly w.p. 0.75, player 1 sees player 0's action
/// correctly w.p. 0.8.
pub fn tiny_game() -> DiscreteOracleGame {
    let s = spec(&[2, 2], &[2, 2], 2, 0.95);
    let (ns, na) = (2, 4);
    let mut transition = Vec::new();
    let mut reward = Vec::new();
    for st in 0..ns {
        for ja in 0..na {
            let (a0, a1) = (ja / 2, ja % 2);
            let target = st ^ a1;
            let mut row = vec![0.2; 2];
            row[target] = 0.8;
            transition.push(row);
            let r = 0.5 * if a0 == st { 1.0 } else { -1.0 } + 0.5 * if a0 == a1 { 1.0 } else { -1.0 };
            reward.push(vec![r, -r]);
        }
    }
    let mut obs0 = Vec::new();
    let mut obs1 = Vec::new();
    for ja in 0..na {
        let a0 = ja / 2;
        for next in 0..ns {
            let mut r0 = vec![0.25; 2];
            r0[next] = 0.75;
            obs0.push(r0);
            let mut r1 = vec![0.2; 2];
            r1[a0] = 0.8;
            obs1.push(r1);
        }
    }
    DiscreteOracleGame::new(
        "tiny",
        s,
        ns,
        vec![0.5, 0.5],
        transition,
        vec![obs0, obs1],
        reward,
    )
    .expect("tiny game is well formed")
}

/// Two-layer illustration game: |A^0| = |O^1| = 2, |A^1| = |O^0| = 1.
/// The state is static and player 1 observes it exactly.
pub fn fig1_game() -> DiscreteOracleGame {
    let s = spec(&[2, 1], &[1, 2], 1, 1.0);
    let transition = (0..2).flat_map(|st| (0..2).map(move |_| one_hot(2, st))).collect();
    let obs0 = vec![vec![1.0]; 4];
    let obs1 = (0..2).flat_map(|_| (0..2).map(|next| one_hot(2, next))).collect();
    DiscreteOracleGame::new(
        "fig1",
        s,
        2,
        vec![0.5, 0.5],
        transition,
        vec![obs0, obs1],
        vec![vec![0.0, 0.0]; 4],
    )
    .expect("fig1 game is well formed")
}

/// One state, one action each, both players see a fair coin.
pub fn uniform_observation_game() -> DiscreteOracleGame {
    let s = spec(&[1, 1], &[2, 2], 0, 1.0);
    DiscreteOracleGame::new(
        "uniform-observation",
        s,
        1,
        vec![1.0],
        vec![vec![1.0]],
        vec![vec![vec![0.5, 0.5]], vec![vec![0.5, 0.5]]],
        vec![vec![0.0, 0.0]],
    )
    .expect("well formed")
}

/// One state, one action each; `Z^0 = [0.8, 0.2]`, `Z^1 = [0.5, 0.5]`.
pub fn skewed_observation_game() -> DiscreteOracleGame {
    let s = spec(&[1, 1], &[2, 2], 0, 1.0);
    DiscreteOracleGame::new(
        "skewed-observation",
        s,
        1,
        vec![1.0],
        vec![vec![1.0]],
        vec![vec![vec![0.8, 0.2]], vec![vec![0.5, 0.5]]],
        vec![vec![0.0, 0.0]],
    )
    .expect("well formed")
}

/// Single state, single action per player, reward 1 to player 0 every step.
pub fn constant_reward_game(horizon: usize, discount: f64) -> DiscreteOracleGame {
    let s = spec(&[1, 1], &[1, 1], horizon, discount);
    DiscreteOracleGame::new(
        "constant-reward",
        s,
        1,
        vec![1.0],
        vec![vec![1.0]],
        vec![vec![vec![1.0]], vec![vec![1.0]]],
        vec![vec![1.0, -1.0]],
    )
    .expect("well formed")
}

fn random_distribution<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    // Exponential spacings give a uniform draw from the simplex.
    let raw: Vec<f64> = (0..len).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = raw.iter().sum();
    let mut v: Vec<f64> = raw.iter().map(|x| x / total).collect();
    // Force the row to sum to one to the last ulp.
    let head: f64 = v[..len - 1].iter().sum();
    v[len - 1] = (1.0 - head).max(0.0);
    v
}

/// Random zero-sum game with dense tables and uniform-simplex rows.
pub fn random_game<R: Rng + ?Sized>(
    num_states: usize,
    actions: &[usize],
    observations: &[usize],
    horizon: usize,
    rng: &mut R,
) -> DiscreteOracleGame {
    assert_eq!(actions.len(), 2, "random games are two-player zero-sum");
    let s = spec(actions, observations, horizon, 0.95);
    let na = s.num_joint_actions();
    let transition = (0..num_states * na)
        .map(|_| random_distribution(num_states, rng))
        .collect();
    let observation = observations
        .iter()
        .map(|&no| (0..na * num_states).map(|_| random_distribution(no, rng)).collect())
        .collect();
    let reward = (0..num_states * na)
        .map(|_| {
            let r: f64 = rng.random_range(-1.0..1.0);
            vec![r, -r]
        })
        .collect();
    let initial = random_distribution(num_states, rng);
    DiscreteOracleGame::new("random", s, num_states, initial, transition, observation, reward)
        .expect("random game is well formed")
}
