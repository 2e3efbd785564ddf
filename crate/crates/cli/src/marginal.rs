//! Action-sequence marginals of a joint policy, with observations and the
//! opponent integrated out.
//!
//! Below a work guard the player's private history tree is enumerated:
//! each node carries particles `(state, opponent history)` whose split by
//! the player's next observation gives that observation's probability.
//! Policies whose action probabilities ignore observations therefore get
//! exact marginals. Above the guard whole episodes are sampled instead.

use std::collections::BTreeMap;

use cdit::cdit::InfoSetKey;
use cdit::cfr::{sample_action, BehaviorPolicy, Policy};
use cdit::model::{JointAction, Posg};
use cdit::seeding::{derive, derive_all, rng_from, stream};
use cdit::Result;
use rand::Rng;

/// Particle-steps allowed for enumeration: `Σ_d |A|^{d+1} · particles`.
pub const ENUMERATION_GUARD: f64 = 1e8;
/// Episodes drawn when enumeration is too large.
pub const SAMPLED_EPISODES: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct MarginalRow {
    pub actions: Vec<usize>,
    pub probability: f64,
    /// Sum of commanded displacements, for models with a planar reading.
    pub displacement: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Marginal {
    pub player: usize,
    pub rows: Vec<MarginalRow>,
    pub enumerated: bool,
}

fn enumeration_work(actions: usize, horizon: usize, particles: usize) -> f64 {
    (0..=horizon).map(|d| (actions as f64).powi(d as i32 + 1)).sum::<f64>() * particles as f64
}

/// Marginal distribution of `player`'s action sequences over decision
/// steps `0..=horizon`, sorted by sequence.
pub fn policy_marginal<M: Posg>(
    model: &M,
    policies: &[BehaviorPolicy],
    player: usize,
    horizon: usize,
    particles: usize,
    seed: u64,
) -> Result<Marginal> {
    let actions = model.spec().action_counts[player];
    let seed = derive_all(seed, &[stream::MARGINAL, player as u64]);
    let (probs, enumerated) = if enumeration_work(actions, horizon, particles) <= ENUMERATION_GUARD {
        (enumerate(model, policies, player, horizon, particles, seed), true)
    } else {
        (sample(model, policies, player, horizon, seed)?, false)
    };
    let rows = probs
        .into_iter()
        .map(|(seq, probability)| {
            let displacement = seq.iter().try_fold([0.0, 0.0], |acc, &a| {
                model.displacement(player, a).map(|d| [acc[0] + d[0], acc[1] + d[1]])
            });
            MarginalRow {
                actions: seq,
                probability,
                displacement,
            }
        })
        .collect();
    Ok(Marginal {
        player,
        rows,
        enumerated,
    })
}

struct Enumerator<'a, M: Posg, R> {
    model: &'a M,
    policies: &'a [BehaviorPolicy],
    player: usize,
    horizon: usize,
    rng: R,
    out: BTreeMap<Vec<usize>, f64>,
}

impl<M: Posg, R: Rng> Enumerator<'_, M, R> {
    fn visit(&mut self, depth: usize, key: &InfoSetKey, seq: &mut Vec<usize>, prob: f64, particles: &[(M::State, InfoSetKey)]) {
        let me = self.player;
        let dist = self.policies[me].distribution(key);
        for (a, &pa) in dist.iter().enumerate() {
            if pa <= 0.0 {
                continue;
            }
            seq.push(a);
            let p = prob * pa;
            if depth == self.horizon {
                *self.out.entry(seq.clone()).or_insert(0.0) += p;
            } else {
                // Step every particle and group by the player's observation.
                let mut groups: BTreeMap<usize, Vec<(M::State, InfoSetKey)>> = BTreeMap::new();
                for (state, opp_key) in particles {
                    let b = sample_action(&self.policies[1 - me].distribution(opp_key), &mut self.rng);
                    let joint = if me == 0 { JointAction::pair(a, b) } else { JointAction::pair(b, a) };
                    let next = self.model.sample_next_state(state, &joint, &mut self.rng);
                    let obs = self.model.sample_observation(&joint, &next, &mut self.rng);
                    let opp_next = opp_key.child(b, obs.player(1 - me));
                    groups.entry(obs.player(me)).or_default().push((next, opp_next));
                }
                let n = particles.len() as f64;
                for (o, group) in groups {
                    let child = key.child(a, o);
                    let share = group.len() as f64 / n;
                    self.visit(depth + 1, &child, seq, p * share, &group);
                }
            }
            seq.pop();
        }
    }
}

fn enumerate<M: Posg>(
    model: &M,
    policies: &[BehaviorPolicy],
    player: usize,
    horizon: usize,
    particles: usize,
    seed: u64,
) -> BTreeMap<Vec<usize>, f64> {
    let mut rng = rng_from(seed);
    let root: Vec<(M::State, InfoSetKey)> = (0..particles)
        .map(|_| (model.sample_initial_state(&mut rng), InfoSetKey::root(1 - player)))
        .collect();
    let mut e = Enumerator {
        model,
        policies,
        player,
        horizon,
        rng,
        out: BTreeMap::new(),
    };
    e.visit(0, &InfoSetKey::root(player), &mut Vec::new(), 1.0, &root);
    e.out
}

fn sample<M: Posg>(
    model: &M,
    policies: &[BehaviorPolicy],
    player: usize,
    horizon: usize,
    seed: u64,
) -> Result<BTreeMap<Vec<usize>, f64>> {
    let mut counts: BTreeMap<Vec<usize>, u64> = BTreeMap::new();
    for e in 0..SAMPLED_EPISODES {
        let mut rng = rng_from(derive(seed, e as u64));
        let mut state = model.sample_initial_state(&mut rng);
        let mut keys = [InfoSetKey::root(0), InfoSetKey::root(1)];
        let mut seq = Vec::with_capacity(horizon + 1);
        for _ in 0..=horizon {
            let a = [
                sample_action(&policies[0].distribution(&keys[0]), &mut rng),
                sample_action(&policies[1].distribution(&keys[1]), &mut rng),
            ];
            let joint = JointAction::pair(a[0], a[1]);
            let next = model.sample_next_state(&state, &joint, &mut rng);
            let obs = model.sample_observation(&joint, &next, &mut rng);
            for p in 0..2 {
                keys[p] = keys[p].child(a[p], obs.player(p));
            }
            seq.push(a[player]);
            state = next;
        }
        *counts.entry(seq).or_insert(0) += 1;
    }
    let n = SAMPLED_EPISODES as f64;
    Ok(counts.into_iter().map(|(k, c)| (k, c as f64 / n)).collect())
}
