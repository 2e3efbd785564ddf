//! Continuous tag: a pursuer and an evader on an unbounded plane.
//!
//! Each agent picks one of six headings per step and moves a fixed distance,
//! perturbed by isotropic Gaussian noise. Each agent observes the quadrant of
//! the other agent's relative position. The pursuer is paid 1 (the evader -1)
//! at the first step that starts with the agents within the capture radius;
//! that step ends the episode.

use rand::Rng;
use rand_distr::StandardNormal;
use smallvec::smallvec;

use super::{JointAction, PlayerValues, Posg, PosgSpec};
use crate::{Error, Result};

pub const PURSUER: usize = 0;
pub const EVADER: usize = 1;

/// Unit headings at angles `2πk/6`.
pub const TAG_DIRECTIONS: [[f64; 2]; 6] = {
    // cos/sin of multiples of 60 degrees
    const H: f64 = 0.866_025_403_784_438_6;
    [
        [1.0, 0.0],
        [0.5, H],
        [-0.5, H],
        [-1.0, 0.0],
        [-0.5, -H],
        [0.5, -H],
    ]
};

#[derive(Debug, Clone, PartialEq)]
pub struct TagParams {
    pub step_length: f64,
    pub noise_sigma: f64,
    pub capture_radius: f64,
    pub discount: f64,
    pub horizon: usize,
    /// Half-width of the uniform initial box for each coordinate.
    pub initial_half_width: f64,
}

impl Default for TagParams {
    fn default() -> Self {
        Self {
            step_length: 0.125,
            noise_sigma: 0.02,
            capture_radius: 0.1,
            discount: 0.95,
            horizon: 5,
            initial_half_width: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TagState {
    pub pursuer: [f64; 2],
    pub evader: [f64; 2],
    pub captured: bool,
}

impl TagState {
    pub fn distance(&self) -> f64 {
        let dx = self.evader[0] - self.pursuer[0];
        let dy = self.evader[1] - self.pursuer[1];
        dx.hypot(dy)
    }
}

/// Quadrant of a relative position: 0 for (x>=0, y>=0), 1 for (x<0, y>=0),
/// 2 for (x<0, y<0), 3 for (x>=0, y<0).
pub fn tag_quadrant(rel: [f64; 2]) -> usize {
    match (rel[0] >= 0.0, rel[1] >= 0.0) {
        (true, true) => 0,
        (false, true) => 1,
        (false, false) => 2,
        (true, false) => 3,
    }
}

#[derive(Debug, Clone)]
pub struct ContinuousTag {
    params: TagParams,
    spec: PosgSpec,
}

impl ContinuousTag {
    pub fn new(params: TagParams) -> Result<Self> {
        let finite = [
            params.step_length,
            params.noise_sigma,
            params.capture_radius,
            params.initial_half_width,
        ];
        if finite.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidModel(
                "tag lengths must be finite and non-negative".into(),
            ));
        }
        let spec = PosgSpec {
            num_players: 2,
            action_counts: vec![6, 6],
            observation_counts: vec![4, 4],
            horizon: params.horizon,
            discount: params.discount,
            reward_bounds: vec![(0.0, 1.0), (-1.0, 0.0)],
        };
        spec.validate()?;
        Ok(Self { params, spec })
    }

    pub fn params(&self) -> &TagParams {
        &self.params
    }

    fn observe(&self, player: usize, s: &TagState) -> usize {
        let (me, other) = if player == PURSUER {
            (s.pursuer, s.evader)
        } else {
            (s.evader, s.pursuer)
        };
        tag_quadrant([other[0] - me[0], other[1] - me[1]])
    }

    fn in_range(&self, s: &TagState) -> bool {
        s.distance() <= self.params.capture_radius
    }
}

impl Default for ContinuousTag {
    fn default() -> Self {
        Self::new(TagParams::default()).expect("default tag parameters are valid")
    }
}

impl Posg for ContinuousTag {
    type State = TagState;

    fn spec(&self) -> &PosgSpec {
        &self.spec
    }

    fn name(&self) -> String {
        "tag".into()
    }

    fn sample_initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> TagState {
        let w = self.params.initial_half_width;
        let mut u = || if w > 0.0 { rng.random_range(-w..=w) } else { 0.0 };
        TagState {
            pursuer: [u(), u()],
            evader: [u(), u()],
            captured: false,
        }
    }

    fn is_terminal(&self, s: &TagState) -> bool {
        s.captured
    }

    fn rewards(&self, s: &TagState, _action: &JointAction) -> PlayerValues {
        if !s.captured && self.in_range(s) {
            smallvec![1.0, -1.0]
        } else {
            smallvec![0.0, 0.0]
        }
    }

    fn sample_next_state<R: Rng + ?Sized>(
        &self,
        s: &TagState,
        action: &JointAction,
        rng: &mut R,
    ) -> TagState {
        if s.captured {
            return *s;
        }
        if self.in_range(s) {
            return TagState {
                captured: true,
                ..*s
            };
        }
        let step = self.params.step_length;
        let sigma = self.params.noise_sigma;
        let mut mv = |pos: [f64; 2], a: usize| {
            let d = TAG_DIRECTIONS[a];
            let mut out = [pos[0] + step * d[0], pos[1] + step * d[1]];
            if sigma > 0.0 {
                let nx: f64 = rng.sample(StandardNormal);
                let ny: f64 = rng.sample(StandardNormal);
                out[0] += sigma * nx;
                out[1] += sigma * ny;
            }
            out
        };
        let pursuer = mv(s.pursuer, action.player(PURSUER));
        let evader = mv(s.evader, action.player(EVADER));
        TagState {
            pursuer,
            evader,
            captured: false,
        }
    }

    fn player_observation_likelihood(
        &self,
        player: usize,
        _action: &JointAction,
        next: &TagState,
        observation: usize,
    ) -> f64 {
        if self.observe(player, next) == observation {
            1.0
        } else {
            0.0
        }
    }

    fn sample_player_observation<R: Rng + ?Sized>(
        &self,
        player: usize,
        _action: &JointAction,
        next: &TagState,
        _rng: &mut R,
    ) -> usize {
        self.observe(player, next)
    }

    fn is_zero_sum(&self) -> bool {
        true
    }

    fn displacement(&self, _player: usize, action: usize) -> Option<[f64; 2]> {
        let d = TAG_DIRECTIONS.get(action)?;
        Some([self.params.step_length * d[0], self.params.step_length * d[1]])
    }
}
