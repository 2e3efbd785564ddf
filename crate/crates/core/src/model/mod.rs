//! POSG abstraction and concrete environments.
//!
//! A model is a generative simulator: initial-state sampling, a transition
//! sampler, per-player observation sampling and likelihoods, and a
//! deterministic reward function `r(s, a)`. Models are immutable once built.

mod discrete;
pub mod games;
mod tag;

pub use discrete::DiscreteOracleGame;
pub use tag::{tag_quadrant, ContinuousTag, TagParams, TagState, EVADER, PURSUER, TAG_DIRECTIONS};

use std::fmt;

use rand::Rng;
use smallvec::SmallVec;

use crate::{Error, Result};

/// Per-player values (rewards, returns) for a joint step.
pub type PlayerValues = SmallVec<[f64; 2]>;

/// Static description of a POSG instance.
#[derive(Debug, Clone, PartialEq)]
pub struct PosgSpec {
    pub num_players: usize,
    pub action_counts: Vec<usize>,
    pub observation_counts: Vec<usize>,
    /// Horizon `D`: decisions happen at steps `0..=D`.
    pub horizon: usize,
    pub discount: f64,
    pub reward_bounds: Vec<(f64, f64)>,
}

impl PosgSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidModel(m));
        if self.num_players == 0 {
            return bad("num_players must be at least 1".into());
        }
        if self.action_counts.len() != self.num_players
            || self.observation_counts.len() != self.num_players
            || self.reward_bounds.len() != self.num_players
        {
            return bad("per-player vectors must have num_players entries".into());
        }
        if self.action_counts.iter().any(|&c| c == 0 || c > u8::MAX as usize) {
            return bad("action counts must be in [1, 255]".into());
        }
        if self.observation_counts.iter().any(|&c| c == 0 || c > u8::MAX as usize) {
            return bad("observation counts must be in [1, 255]".into());
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return bad(format!("discount {} outside [0, 1]", self.discount));
        }
        for (i, &(lo, hi)) in self.reward_bounds.iter().enumerate() {
            if !(lo <= hi) {
                return bad(format!("reward bounds of player {i} are inverted"));
            }
        }
        Ok(())
    }

    pub fn num_joint_actions(&self) -> usize {
        self.action_counts.iter().product()
    }

    pub fn num_joint_observations(&self) -> usize {
        self.observation_counts.iter().product()
    }

    /// Mixed-radix index of a joint action, player 0 most significant.
    pub fn joint_action_index(&self, action: &JointAction) -> usize {
        action
            .0
            .iter()
            .zip(&self.action_counts)
            .fold(0, |acc, (&a, &n)| acc * n + a)
    }

    pub fn joint_action_from_index(&self, mut index: usize) -> JointAction {
        let mut out: SmallVec<[usize; 2]> = SmallVec::from_elem(0, self.num_players);
        for p in (0..self.num_players).rev() {
            let n = self.action_counts[p];
            out[p] = index % n;
            index /= n;
        }
        JointAction(out)
    }

    pub fn joint_observation_index(&self, obs: &JointObservation) -> usize {
        obs.0
            .iter()
            .zip(&self.observation_counts)
            .fold(0, |acc, (&o, &n)| acc * n + o)
    }

    pub fn joint_observation_from_index(&self, mut index: usize) -> JointObservation {
        let mut out: SmallVec<[usize; 2]> = SmallVec::from_elem(0, self.num_players);
        for p in (0..self.num_players).rev() {
            let n = self.observation_counts[p];
            out[p] = index % n;
            index /= n;
        }
        JointObservation(out)
    }

    pub fn check_action(&self, action: &JointAction) -> Result<()> {
        if action.0.len() != self.num_players {
            return Err(Error::InvalidArgument(format!(
                "joint action has {} entries, expected {}",
                action.0.len(),
                self.num_players
            )));
        }
        for (p, (&a, &n)) in action.0.iter().zip(&self.action_counts).enumerate() {
            if a >= n {
                return Err(Error::InvalidArgument(format!(
                    "action {a} of player {p} out of range (|A| = {n})"
                )));
            }
        }
        Ok(())
    }

    /// Largest absolute reward any player can receive in one step.
    pub fn max_abs_reward(&self) -> f64 {
        self.reward_bounds
            .iter()
            .map(|&(lo, hi)| lo.abs().max(hi.abs()))
            .fold(0.0, f64::max)
    }
}

/// One action index per player.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct JointAction(pub SmallVec<[usize; 2]>);

impl JointAction {
    pub fn new(actions: &[usize]) -> Self {
        Self(SmallVec::from_slice(actions))
    }

    pub fn pair(a0: usize, a1: usize) -> Self {
        Self(SmallVec::from_slice(&[a0, a1]))
    }

    pub fn player(&self, p: usize) -> usize {
        self.0[p]
    }
}

impl fmt::Display for JointAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_tuple(f, &self.0)
    }
}

/// One observation index per player.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct JointObservation(pub SmallVec<[usize; 2]>);

impl JointObservation {
    pub fn new(obs: &[usize]) -> Self {
        Self(SmallVec::from_slice(obs))
    }

    pub fn player(&self, p: usize) -> usize {
        self.0[p]
    }
}

impl fmt::Display for JointObservation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_tuple(f, &self.0)
    }
}

fn write_tuple(f: &mut fmt::Formatter<'_>, xs: &[usize]) -> fmt::Result {
    write!(f, "(")?;
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            write!(f, ",")?;
        }
        write!(f, "{x}")?;
    }
    write!(f, ")")
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerativeStep<S> {
    pub next_state: S,
    pub joint_observation: JointObservation,
    pub rewards: PlayerValues,
    pub terminal: bool,
}

/// Generative model of a partially observable stochastic game.
///
/// Rewards are a deterministic function of the state and joint action.
/// Terminal states are absorbing: [`Posg::sample_next_state`] returns them
/// unchanged and they pay no reward, so particle beliefs can carry them.
pub trait Posg: Send + Sync {
    type State: Clone + fmt::Debug + PartialEq + Send + Sync;

    fn spec(&self) -> &PosgSpec;

    /// Short identifier used in file headers.
    fn name(&self) -> String;

    fn sample_initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::State;

    fn is_terminal(&self, state: &Self::State) -> bool;

    fn rewards(&self, state: &Self::State, action: &JointAction) -> PlayerValues;

    fn sample_next_state<R: Rng + ?Sized>(
        &self,
        state: &Self::State,
        action: &JointAction,
        rng: &mut R,
    ) -> Self::State;

    /// `Z^i(o^i | a, s')`.
    fn player_observation_likelihood(
        &self,
        player: usize,
        action: &JointAction,
        next_state: &Self::State,
        observation: usize,
    ) -> f64;

    fn sample_player_observation<R: Rng + ?Sized>(
        &self,
        player: usize,
        action: &JointAction,
        next_state: &Self::State,
        rng: &mut R,
    ) -> usize;

    /// Whether rewards always sum to zero across players.
    fn is_zero_sum(&self) -> bool;

    /// Commanded planar displacement of an action, for models with a spatial reading.
    fn displacement(&self, _player: usize, _action: usize) -> Option<[f64; 2]> {
        None
    }

    fn sample_observation<R: Rng + ?Sized>(
        &self,
        action: &JointAction,
        next_state: &Self::State,
        rng: &mut R,
    ) -> JointObservation {
        let n = self.spec().num_players;
        JointObservation(
            (0..n)
                .map(|p| self.sample_player_observation(p, action, next_state, rng))
                .collect(),
        )
    }

    /// Joint likelihood: product of the per-player likelihoods.
    fn observation_likelihood(
        &self,
        action: &JointAction,
        next_state: &Self::State,
        observation: &JointObservation,
    ) -> f64 {
        let mut l = 1.0;
        for (p, &o) in observation.0.iter().enumerate() {
            l *= self.player_observation_likelihood(p, action, next_state, o);
            if l == 0.0 {
                break;
            }
        }
        l
    }

    /// Successor of every state under one joint action, index-aligned.
    /// Models may override this and the other batch hooks for speed.
    fn propagate_batch<R: Rng + ?Sized>(
        &self,
        states: &[Self::State],
        action: &JointAction,
        rng: &mut R,
    ) -> Vec<Self::State> {
        states.iter().map(|s| self.sample_next_state(s, action, rng)).collect()
    }

    /// Multiplies each weight by the joint likelihood of `observation` at
    /// the matching successor state. Zero weights stay zero.
    fn weight_by_likelihood(
        &self,
        action: &JointAction,
        next_states: &[Self::State],
        observation: &JointObservation,
        weights: &mut [f64],
    ) {
        for (s, w) in next_states.iter().zip(weights.iter_mut()) {
            if *w != 0.0 {
                *w *= self.observation_likelihood(action, s, observation);
            }
        }
    }

    /// `Σ_k w_k r(s_k, a)` per player.
    fn weighted_rewards(&self, states: &[Self::State], weights: &[f64], action: &JointAction) -> PlayerValues {
        let n = self.spec().num_players;
        let mut out = PlayerValues::from_elem(0.0, n);
        for (s, &w) in states.iter().zip(weights) {
            if w == 0.0 {
                continue;
            }
            let r = self.rewards(s, action);
            for p in 0..n {
                out[p] += w * r[p];
            }
        }
        out
    }

    fn generative_step<R: Rng + ?Sized>(
        &self,
        state: &Self::State,
        action: &JointAction,
        rng: &mut R,
    ) -> Result<GenerativeStep<Self::State>> {
        if self.is_terminal(state) {
            return Err(Error::TerminalStep);
        }
        self.spec().check_action(action)?;
        let rewards = self.rewards(state, action);
        let next_state = self.sample_next_state(state, action, rng);
        let joint_observation = self.sample_observation(action, &next_state, rng);
        let terminal = self.is_terminal(&next_state);
        Ok(GenerativeStep {
            next_state,
            joint_observation,
            rewards,
            terminal,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> PosgSpec {
        PosgSpec {
            num_players: 2,
            action_counts: vec![2, 3],
            observation_counts: vec![4, 2],
            horizon: 1,
            discount: 0.9,
            reward_bounds: vec![(-1.0, 1.0), (-1.0, 1.0)],
        }
    }

    #[test]
    fn joint_indices_round_trip() {
        let s = spec();
        assert_eq!(s.num_joint_actions(), 6);
        for i in 0..6 {
            assert_eq!(s.joint_action_index(&s.joint_action_from_index(i)), i);
        }
        assert_eq!(s.joint_action_index(&JointAction::pair(1, 2)), 5);
        for i in 0..8 {
            assert_eq!(s.joint_observation_index(&s.joint_observation_from_index(i)), i);
        }
    }

    #[test]
    fn validation_rejects_bad_specs() {
        let mut s = spec();
        assert!(s.validate().is_ok());
        s.reward_bounds[0] = (1.0, -1.0);
        assert!(s.validate().is_err());
        let mut s = spec();
        s.action_counts[1] = 0;
        assert!(s.validate().is_err());
        let mut s = spec();
        s.discount = 1.5;
        assert!(s.validate().is_err());
        let mut s = spec();
        s.num_players = 0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn check_action_bounds() {
        let s = spec();
        assert!(s.check_action(&JointAction::pair(1, 2)).is_ok());
        assert!(s.check_action(&JointAction::pair(2, 0)).is_err());
        assert!(s.check_action(&JointAction::new(&[0])).is_err());
    }
}
