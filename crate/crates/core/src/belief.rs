//! Weighted particle beliefs and the exact Bayes filter for finite games.
//!
//! Beliefs inside the tree are never resampled: a child belief keeps every
//! particle of its parent, propagated through the transition model and
//! reweighted by the observation likelihood, then normalized.

use rand::Rng;

use crate::model::{DiscreteOracleGame, JointAction, JointObservation, PlayerValues, Posg};
use crate::{Error, Result};

const NORM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleBelief<S> {
    particles: Vec<S>,
    weights: Vec<f64>,
}

impl<S: Clone> ParticleBelief<S> {
    /// Equal weights `1/C`.
    pub fn uniform(particles: Vec<S>) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::InvalidArgument("a belief needs at least one particle".into()));
        }
        let w = 1.0 / particles.len() as f64;
        let weights = vec![w; particles.len()];
        Ok(Self { particles, weights })
    }

    /// Validates and normalizes arbitrary non-negative weights.
    pub fn new(particles: Vec<S>, weights: Vec<f64>) -> Result<Self> {
        if particles.is_empty() || particles.len() != weights.len() {
            return Err(Error::InvalidArgument(
                "particles and weights must be non-empty and of equal length".into(),
            ));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidArgument("weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidArgument("at least one weight must be positive".into()));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { particles, weights })
    }

    pub fn sample_from<M, R>(model: &M, count: usize, rng: &mut R) -> Result<Self>
    where
        M: Posg<State = S>,
        R: Rng + ?Sized,
    {
        let particles = (0..count).map(|_| model.sample_initial_state(rng)).collect();
        Self::uniform(particles)
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn particles(&self) -> &[S] {
        &self.particles
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&S, f64)> {
        self.particles.iter().zip(self.weights.iter().copied())
    }

    /// Draws a particle index with probability proportional to its weight.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random::<f64>() * self.weights.iter().sum::<f64>();
        let mut acc = 0.0;
        let mut last = 0;
        for (i, &w) in self.weights.iter().enumerate() {
            if w > 0.0 {
                acc += w;
                last = i;
                if u < acc {
                    return i;
                }
            }
        }
        last
    }

    /// Weight-averaged immediate reward per player.
    pub fn mean_rewards<M: Posg<State = S>>(&self, model: &M, action: &JointAction) -> PlayerValues {
        model.weighted_rewards(&self.particles, &self.weights, action)
    }

    /// Fraction of belief weight on terminal states.
    pub fn terminal_weight<M: Posg<State = S>>(&self, model: &M) -> f64 {
        self.iter()
            .filter(|(s, _)| model.is_terminal(s))
            .map(|(_, w)| w)
            .sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.weights.iter().sum::<f64>() - 1.0).abs() <= NORM_TOL
    }
}

impl ParticleBelief<usize> {
    /// Probability mass per state of a finite game.
    pub fn histogram(&self, num_states: usize) -> Vec<f64> {
        let mut h = vec![0.0; num_states];
        for (&s, w) in self.iter() {
            h[s] += w;
        }
        h
    }
}

/// One successor per particle, index-aligned with the input.
pub fn propagate<M, R>(
    belief: &ParticleBelief<M::State>,
    action: &JointAction,
    model: &M,
    rng: &mut R,
) -> Vec<M::State>
where
    M: Posg,
    R: Rng + ?Sized,
{
    model.propagate_batch(&belief.particles, action, rng)
}

/// `w'_i = w_i * Z(o | a, s'_i)`, normalized.
pub fn reweight<M: Posg>(
    states: Vec<M::State>,
    weights: &[f64],
    action: &JointAction,
    observation: &JointObservation,
    model: &M,
) -> Result<ParticleBelief<M::State>> {
    if states.len() != weights.len() {
        return Err(Error::InvalidArgument(
            "propagated states and weights are not index-aligned".into(),
        ));
    }
    let mut new_weights = weights.to_vec();
    model.weight_by_likelihood(action, &states, observation, &mut new_weights);
    let total: f64 = new_weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::ParticleDepletion {
            action: action.clone(),
            observation: observation.clone(),
        });
    }
    for w in &mut new_weights {
        *w /= total;
    }
    Ok(ParticleBelief {
        particles: states,
        weights: new_weights,
    })
}

/// Draws one chance outcome of `(belief, action)`: picks a particle by
/// weight, propagates every particle, and samples the joint observation at
/// the picked particle's successor. The caller reweights with the returned
/// states.
pub fn sample_observation_branch<M, R>(
    belief: &ParticleBelief<M::State>,
    action: &JointAction,
    model: &M,
    rng: &mut R,
) -> (JointObservation, Vec<M::State>)
where
    M: Posg,
    R: Rng + ?Sized,
{
    let chosen = belief.sample_index(rng);
    let states = propagate(belief, action, model, rng);
    let obs = model.sample_observation(action, &states[chosen], rng);
    (obs, states)
}

/// Exact state distribution of a finite game.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactBelief {
    probs: Vec<f64>,
}

impl ExactBelief {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidArgument("probabilities must be finite and non-negative".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidArgument(format!("probabilities sum to {total}")));
        }
        Ok(Self { probs })
    }

    pub fn initial(game: &DiscreteOracleGame) -> Self {
        Self {
            probs: game.initial().to_vec(),
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Predicted next-state distribution `Σ_s T(s'|s,a) b(s)`.
    pub fn predict(&self, action: &JointAction, game: &DiscreteOracleGame) -> Vec<f64> {
        let ns = game.num_states();
        let mut out = vec![0.0; ns];
        for (s, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (next, &t) in game.transition_row(s, action).iter().enumerate() {
                out[next] += p * t;
            }
        }
        out
    }

    /// `p(o | b, a)` for every joint observation index.
    pub fn observation_distribution(&self, action: &JointAction, game: &DiscreteOracleGame) -> Vec<f64> {
        let predicted = self.predict(action, game);
        let spec = game.spec();
        (0..spec.num_joint_observations())
            .map(|oi| {
                let o = spec.joint_observation_from_index(oi);
                predicted
                    .iter()
                    .enumerate()
                    .map(|(next, &p)| p * game.observation_likelihood(action, &next, &o))
                    .sum()
            })
            .collect()
    }
}

/// `b'(s') ∝ Z(o | a, s') Σ_s T(s' | s, a) b(s)`.
pub fn exact_bayes_update(
    belief: &ExactBelief,
    action: &JointAction,
    observation: &JointObservation,
    game: &DiscreteOracleGame,
) -> Result<ExactBelief> {
    let mut post = belief.predict(action, game);
    for (next, p) in post.iter_mut().enumerate() {
        *p *= game.observation_likelihood(action, &next, observation);
    }
    let total: f64 = post.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ImpossibleObservation {
            action: action.clone(),
            observation: observation.clone(),
        });
    }
    for p in &mut post {
        *p /= total;
    }
    Ok(ExactBelief { probs: post })
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}
