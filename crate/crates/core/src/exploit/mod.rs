//! Exploitability estimation: Monte Carlo evaluation of a joint policy and
//! a POMCP best responder against a frozen opponent.
//!
//! In a zero-sum game the exploitability of player `i` is
//! `e^i = v^i(π) + BR^{-i}(π^i)`, where `BR^{-i}` is the best-response
//! value of the other player. POMCP approximates the best response from
//! below, so the reported exploitabilities are lower bounds.

mod pomcp;

pub use pomcp::{pomcp_best_response, PomcpParams};

use rand::Rng;

use crate::cdit::InfoSetKey;
use crate::cfr::{sample_action, BehaviorPolicy, Policy, Snapshot};
use crate::model::Posg;
use crate::seeding::{derive_all, rng_from, stream};
use crate::{Error, Result};

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self {
                mean: 0.0,
                std_error: 0.0,
                samples: 0,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std_error = if n > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            std_error,
            samples: n,
        }
    }

    /// Sum of independent estimates.
    pub fn plus(self, other: Self) -> Self {
        Self {
            mean: self.mean + other.mean,
            std_error: self.std_error.hypot(other.std_error),
            samples: self.samples.min(other.samples),
        }
    }
}

fn episode_rng(seed: u64, episode: usize) -> rand_chacha::ChaCha8Rng {
    rng_from(derive_all(seed, &[stream::EPISODE, episode as u64]))
}

/// Discounted returns `Σ_{t=0}^{D} γ^t r^i_t` of one self-play episode.
fn play_episode<M: Posg, P: Policy, R: Rng + ?Sized>(
    model: &M,
    policies: &[P],
    horizon: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let spec = model.spec();
    let n = spec.num_players;
    let mut state = model.sample_initial_state(rng);
    let mut keys: Vec<InfoSetKey> = (0..n).map(InfoSetKey::root).collect();
    let mut returns = vec![0.0; n];
    let mut disc = 1.0;
    for _ in 0..=horizon {
        if model.is_terminal(&state) {
            break;
        }
        let action = crate::model::JointAction(
            (0..n)
                .map(|p| sample_action(&policies[p].distribution(&keys[p]), rng))
                .collect(),
        );
        let step = model.generative_step(&state, &action, rng)?;
        for p in 0..n {
            returns[p] += disc * step.rewards[p];
            keys[p] = keys[p].child(action.player(p), step.joint_observation.player(p));
        }
        disc *= spec.discount;
        state = step.next_state;
    }
    Ok(returns)
}

/// Monte Carlo estimate of every player's value under the joint policy,
/// with one derived random stream per episode.
pub fn rollout_value<M: Posg, P: Policy>(
    model: &M,
    policies: &[P],
    horizon: usize,
    episodes: usize,
    seed: u64,
) -> Result<Vec<Estimate>> {
    let n = model.spec().num_players;
    if policies.len() != n {
        return Err(Error::InvalidArgument(format!("expected {n} policies, got {}", policies.len())));
    }
    if episodes == 0 {
        return Err(Error::InvalidArgument("episodes must be at least 1".into()));
    }
    let mut per_player = vec![Vec::with_capacity(episodes); n];
    for e in 0..episodes {
        let returns = play_episode(model, policies, horizon, &mut episode_rng(seed, e))?;
        for (p, r) in returns.into_iter().enumerate() {
            per_player[p].push(r);
        }
    }
    Ok(per_player.iter().map(|xs| Estimate::from_samples(xs)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExploitabilityPoint {
    pub iteration: u64,
    /// `v^i(π)`.
    pub values: Vec<Estimate>,
    /// Best-response value of player `i` against the other's frozen policy.
    pub best_responses: Vec<Estimate>,
    /// `e^i = v^i + BR^{-i}`.
    pub exploitability: Vec<Estimate>,
    /// `Σ_i e^i`.
    pub nashconv: Estimate,
    pub episodes: usize,
}

/// Exploitability of a two-player zero-sum joint policy.
pub fn exploitability<M: Posg>(
    model: &M,
    policies: &[BehaviorPolicy],
    params: &PomcpParams,
    horizon: usize,
    episodes: usize,
    seed: u64,
) -> Result<ExploitabilityPoint> {
    if model.spec().num_players != 2 || !model.is_zero_sum() {
        return Err(Error::InvalidModel("exploitability needs a two-player zero-sum model".into()));
    }
    let values = rollout_value(model, policies, horizon, episodes, derive_all(seed, &[stream::EVALUATION]))?;
    let best_responses = (0..2)
        .map(|responder| {
            pomcp_best_response(
                model,
                &policies[1 - responder],
                responder,
                params,
                horizon,
                episodes,
                derive_all(seed, &[stream::RESPONDER, responder as u64]),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let exploitability: Vec<Estimate> = (0..2).map(|i| values[i].plus(best_responses[1 - i])).collect();
    // Self-play values cancel episode by episode in a zero-sum game, so
    // NashConv carries only the best-response noise.
    let nashconv = best_responses[0].plus(best_responses[1]);
    Ok(ExploitabilityPoint {
        iteration: 0,
        values,
        best_responses,
        exploitability,
        nashconv,
        episodes,
    })
}

/// One exploitability point per snapshot; each snapshot gets its own
/// derived seed so points are independent of evaluation order.
pub fn exploitability_curve<M: Posg>(
    model: &M,
    snapshots: &[Snapshot],
    params: &PomcpParams,
    horizon: usize,
    episodes: usize,
    seed: u64,
) -> Result<Vec<ExploitabilityPoint>> {
    snapshots
        .iter()
        .map(|s| {
            let mut point = exploitability(
                model,
                &s.policies,
                params,
                horizon,
                episodes,
                derive_all(seed, &[stream::EVALUATION, s.iteration]),
            )?;
            point.iteration = s.iteration;
            Ok(point)
        })
        .collect()
}
