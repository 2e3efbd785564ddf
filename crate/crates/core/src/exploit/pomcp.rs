//! POMCP best responder. The frozen opponent is folded into the generative
//! model, so the responder plans in a POMDP whose particles are pairs of
//! (state, opponent private history).

use rand::Rng;

use super::Estimate;
use crate::bounds::geometric_sum;
use crate::cdit::InfoSetKey;
use crate::cfr::{sample_action, Policy};
use crate::model::{JointAction, Posg};
use crate::seeding::{derive_all, rng_from, stream};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PomcpParams {
    /// Simulations per real decision.
    pub simulations: usize,
    /// UCB exploration constant.
    pub exploration: f64,
    /// Maximum steps simulated beyond the tree; rollouts also stop at the horizon.
    pub rollout_depth: usize,
    /// Target size of the responder's belief at each real step.
    pub particles: usize,
}

impl PomcpParams {
    /// 1000 simulations, exploration equal to the value range
    /// `max|r|·(1 − γ^{D+1})/(1 − γ)`, rollouts to the horizon.
    pub fn for_model<M: Posg>(model: &M, horizon: usize) -> Self {
        let spec = model.spec();
        Self {
            simulations: 1000,
            exploration: spec.max_abs_reward() * geometric_sum(spec.discount, horizon + 1),
            rollout_depth: horizon + 1,
            particles: 1000,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.simulations == 0 || self.particles == 0 || self.rollout_depth == 0 {
            return Err(Error::InvalidArgument("POMCP counts must be positive".into()));
        }
        if !(self.exploration > 0.0) {
            return Err(Error::InvalidArgument("POMCP exploration must be positive".into()));
        }
        Ok(())
    }
}

type Particle<S> = (S, InfoSetKey);

struct ObsNode<S> {
    visits: u64,
    particles: Vec<Particle<S>>,
    actions: Vec<ActNode>,
}

#[derive(Clone, Default)]
struct ActNode {
    visits: u64,
    value: f64,
    children: Vec<(usize, usize)>,
}

impl ActNode {
    fn child(&self, obs: usize) -> Option<usize> {
        self.children.iter().find(|c| c.0 == obs).map(|c| c.1)
    }
}

struct Planner<'a, M: Posg, P: Policy> {
    model: &'a M,
    frozen: &'a P,
    responder: usize,
    params: &'a PomcpParams,
    horizon: usize,
    num_actions: usize,
    nodes: Vec<ObsNode<M::State>>,
}

impl<'a, M: Posg, P: Policy> Planner<'a, M, P> {
    fn new_node(&mut self, particles: Vec<Particle<M::State>>) -> usize {
        self.nodes.push(ObsNode {
            visits: 0,
            particles,
            actions: vec![ActNode::default(); self.num_actions],
        });
        self.nodes.len() - 1
    }

    fn joint(&self, own: usize, other: usize) -> JointAction {
        if self.responder == 0 {
            JointAction::pair(own, other)
        } else {
            JointAction::pair(other, own)
        }
    }

    fn ucb_action<R: Rng + ?Sized>(&self, node: usize, rng: &mut R) -> usize {
        let n = &self.nodes[node];
        let unvisited: Vec<usize> = (0..self.num_actions).filter(|&a| n.actions[a].visits == 0).collect();
        if !unvisited.is_empty() {
            return unvisited[rng.random_range(0..unvisited.len())];
        }
        let log_n = (n.visits as f64).ln();
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (a, act) in n.actions.iter().enumerate() {
            let score = act.value + self.params.exploration * (log_n / act.visits as f64).sqrt();
            if score > best_score {
                best = a;
                best_score = score;
            }
        }
        best
    }

    fn greedy_action(&self, node: usize) -> usize {
        let n = &self.nodes[node];
        let mut best = 0;
        let mut best_value = f64::NEG_INFINITY;
        for (a, act) in n.actions.iter().enumerate() {
            if act.visits > 0 && act.value > best_value {
                best = a;
                best_value = act.value;
            }
        }
        best
    }

    /// One generative step of the responder's POMDP.
    fn step<R: Rng + ?Sized>(
        &self,
        state: &M::State,
        opp_key: &InfoSetKey,
        own: usize,
        rng: &mut R,
    ) -> Result<(M::State, InfoSetKey, usize, f64)> {
        let opp = 1 - self.responder;
        let a_o = sample_action(&self.frozen.distribution(opp_key), rng);
        let step = self.model.generative_step(state, &self.joint(own, a_o), rng)?;
        let key = opp_key.child(a_o, step.joint_observation.player(opp));
        Ok((
            step.next_state,
            key,
            step.joint_observation.player(self.responder),
            step.rewards[self.responder],
        ))
    }

    fn rollout<R: Rng + ?Sized>(&self, mut state: M::State, mut key: InfoSetKey, depth: usize, rng: &mut R) -> Result<f64> {
        let gamma = self.model.spec().discount;
        let mut total = 0.0;
        let mut disc = 1.0;
        let last = self.horizon.min(depth + self.params.rollout_depth - 1);
        for _ in depth..=last {
            if self.model.is_terminal(&state) {
                break;
            }
            let own = rng.random_range(0..self.num_actions);
            let (next, k, _, r) = self.step(&state, &key, own, rng)?;
            total += disc * r;
            disc *= gamma;
            state = next;
            key = k;
        }
        Ok(total)
    }

    fn simulate<R: Rng + ?Sized>(
        &mut self,
        node: usize,
        state: M::State,
        key: InfoSetKey,
        depth: usize,
        rng: &mut R,
    ) -> Result<f64> {
        if depth > self.horizon || self.model.is_terminal(&state) {
            return Ok(0.0);
        }
        let a = self.ucb_action(node, rng);
        let (next, next_key, obs, r) = self.step(&state, &key, a, rng)?;
        let mut future = 0.0;
        if depth < self.horizon && !self.model.is_terminal(&next) {
            let cap = 4 * self.params.particles;
            match self.nodes[node].actions[a].child(obs) {
                Some(child) => {
                    if self.nodes[child].particles.len() < cap {
                        self.nodes[child].particles.push((next.clone(), next_key.clone()));
                    }
                    future = self.simulate(child, next, next_key, depth + 1, rng)?;
                }
                None => {
                    let child = self.new_node(vec![(next.clone(), next_key.clone())]);
                    self.nodes[node].actions[a].children.push((obs, child));
                    future = self.rollout(next, next_key, depth + 1, rng)?;
                }
            }
        }
        let ret = r + self.model.spec().discount * future;
        let n = &mut self.nodes[node];
        n.visits += 1;
        let act = &mut n.actions[a];
        act.visits += 1;
        act.value += (ret - act.value) / act.visits as f64;
        Ok(ret)
    }

    /// Posterior particles for the real (action, observation), topped up by
    /// rejection sampling from the previous root's particles.
    fn advance<R: Rng + ?Sized>(&mut self, root: usize, own: usize, obs: usize, rng: &mut R) -> Result<Option<usize>> {
        let child = match self.nodes[root].actions[own].child(obs) {
            Some(c) => c,
            None => {
                let c = self.new_node(Vec::new());
                self.nodes[root].actions[own].children.push((obs, c));
                c
            }
        };
        let target = self.params.particles;
        let mut attempts = 0;
        let source_len = self.nodes[root].particles.len();
        while self.nodes[child].particles.len() < target && attempts < 100 * target && source_len > 0 {
            attempts += 1;
            let (s, k) = self.nodes[root].particles[rng.random_range(0..source_len)].clone();
            if self.model.is_terminal(&s) {
                continue;
            }
            let (next, next_key, o, _) = self.step(&s, &k, own, rng)?;
            if o == obs {
                self.nodes[child].particles.push((next, next_key));
            }
        }
        Ok(if self.nodes[child].particles.is_empty() {
            None
        } else {
            Some(child)
        })
    }
}

/// Mean discounted return of `responder` playing POMCP (replanning every
/// step, reusing the search tree within an episode) against `frozen`.
pub fn pomcp_best_response<M: Posg, P: Policy>(
    model: &M,
    frozen: &P,
    responder: usize,
    params: &PomcpParams,
    horizon: usize,
    episodes: usize,
    seed: u64,
) -> Result<Estimate> {
    params.validate()?;
    if model.spec().num_players != 2 || responder > 1 {
        return Err(Error::InvalidArgument("POMCP responds in two-player games".into()));
    }
    if episodes == 0 {
        return Err(Error::InvalidArgument("episodes must be at least 1".into()));
    }
    let spec = model.spec();
    let opp = 1 - responder;
    let mut returns = Vec::with_capacity(episodes);
    for e in 0..episodes {
        let mut rng = rng_from(derive_all(seed, &[stream::EPISODE, e as u64]));
        let mut planner = Planner {
            model,
            frozen,
            responder,
            params,
            horizon,
            num_actions: spec.action_counts[responder],
            nodes: Vec::new(),
        };
        let initial: Vec<Particle<M::State>> = (0..params.particles)
            .map(|_| (model.sample_initial_state(&mut rng), InfoSetKey::root(opp)))
            .collect();
        let mut root = Some(planner.new_node(initial));
        let mut state = model.sample_initial_state(&mut rng);
        let mut opp_key = InfoSetKey::root(opp);
        let mut total = 0.0;
        let mut disc = 1.0;
        for depth in 0..=horizon {
            if model.is_terminal(&state) {
                break;
            }
            let own = match root {
                Some(node) => {
                    for _ in 0..params.simulations {
                        let particles = &planner.nodes[node].particles;
                        let (s, k) = particles[rng.random_range(0..particles.len())].clone();
                        planner.simulate(node, s, k, depth, &mut rng)?;
                    }
                    planner.greedy_action(node)
                }
                // Belief lost: fall back to the rollout policy.
                None => rng.random_range(0..planner.num_actions),
            };
            let a_o = sample_action(&frozen.distribution(&opp_key), &mut rng);
            let step = model.generative_step(&state, &planner.joint(own, a_o), &mut rng)?;
            total += disc * step.rewards[responder];
            disc *= spec.discount;
            opp_key = opp_key.child(a_o, step.joint_observation.player(opp));
            let obs = step.joint_observation.player(responder);
            state = step.next_state;
            if depth < horizon && !model.is_terminal(&state) {
                root = match root {
                    Some(node) => planner.advance(node, own, obs, &mut rng)?,
                    None => None,
                };
            }
        }
        returns.push(total);
    }
    Ok(Estimate::from_samples(&returns))
}
