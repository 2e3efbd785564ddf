//! Conditional distribution information set trees over particle beliefs.
//!
//! Each observation node carries a particle belief conditioned on its joint
//! history. A joint-action node owns exactly `C` chance branches; branch `k`
//! is generated by [`sample_observation_branch`] followed by [`reweight`],
//! driven by a random stream derived from `(tree seed, parent path, joint
//! action, k)`. A child is therefore a pure function of its path and the tree
//! seed, which lets deep nodes be regenerated on demand instead of stored.
//!
//! Nodes up to `max_cached_depth` live in a persistent arena, are memoized
//! and registered in the per-player information-set index. Deeper nodes go to
//! a scratch arena that [`Cdit::end_iteration`] clears.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::sync::Arc;

use rand::Rng;
use smallvec::SmallVec;

use crate::belief::{reweight, sample_observation_branch, ParticleBelief};
use crate::cfr::Policy;
use crate::model::{JointAction, JointObservation, PlayerValues, Posg};
use crate::seeding::{derive, derive_all, rng_from, stream};
use crate::{Error, Result};

/// Belief weight on terminal states above which a node is a leaf.
pub const TERMINAL_LEAF_THRESHOLD: f64 = 0.999;

/// A player's private action-observation history.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InfoSetKey {
    pub player: u8,
    pub history: SmallVec<[(u8, u8); 6]>,
}

impl InfoSetKey {
    pub fn root(player: usize) -> Self {
        Self {
            player: player as u8,
            history: SmallVec::new(),
        }
    }

    pub fn depth(&self) -> usize {
        self.history.len()
    }

    pub fn player(&self) -> usize {
        self.player as usize
    }

    pub fn child(&self, action: usize, observation: usize) -> Self {
        let mut history = self.history.clone();
        history.push((action as u8, observation as u8));
        Self {
            player: self.player,
            history,
        }
    }

    pub fn parent(&self) -> Option<Self> {
        let mut history = self.history.clone();
        history.pop()?;
        Some(Self {
            player: self.player,
            history,
        })
    }

    /// `a0:o0/a1:o1/...`; the empty history encodes as `-`.
    pub fn encode_history(&self) -> String {
        if self.history.is_empty() {
            return "-".into();
        }
        let mut s = String::new();
        for (i, (a, o)) in self.history.iter().enumerate() {
            if i > 0 {
                s.push('/');
            }
            let _ = write!(s, "{a}:{o}");
        }
        s
    }

    pub fn decode(player: usize, encoded: &str) -> Result<Self> {
        let mut key = Self::root(player);
        if encoded == "-" {
            return Ok(key);
        }
        for step in encoded.split('/') {
            let (a, o) = step
                .split_once(':')
                .ok_or_else(|| Error::InvalidArgument(format!("bad history step `{step}`")))?;
            let parse = |x: &str| {
                x.parse::<u8>()
                    .map_err(|_| Error::InvalidArgument(format!("bad history index `{x}`")))
            };
            key.history.push((parse(a)?, parse(o)?));
        }
        Ok(key)
    }
}

impl fmt::Display for InfoSetKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}[{}]", self.player, self.encode_history())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointStep {
    pub action: JointAction,
    pub branch: u32,
    pub observation: JointObservation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId {
    index: u32,
    scratch: bool,
}

impl NodeId {
    pub fn is_scratch(&self) -> bool {
        self.scratch
    }
}

#[derive(Debug, Clone)]
pub struct CditNode<S> {
    pub depth: usize,
    pub belief: Arc<ParticleBelief<S>>,
    pub joint_history: Vec<JointStep>,
    pub terminal_weight: f64,
    path_hash: u64,
    keys: SmallVec<[InfoSetKey; 2]>,
    mean_rewards: Vec<Option<PlayerValues>>,
}

impl<S> CditNode<S> {
    pub fn info_set_key(&self, player: usize) -> &InfoSetKey {
        &self.keys[player]
    }

    pub fn path_hash(&self) -> u64 {
        self.path_hash
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Storage {
    /// Every materialized node is kept and indexed.
    Full,
    /// Nodes deeper than this are regenerated each iteration.
    Bounded { max_cached_depth: usize },
}

#[derive(Debug, Clone, Copy)]
enum ChildSlot {
    Live(NodeId),
    Dead,
}

#[derive(Debug, Clone)]
pub struct Cdit<S> {
    particle_count: usize,
    horizon: usize,
    num_players: usize,
    num_joint_actions: usize,
    seed: u64,
    storage: Storage,
    nodes: Vec<CditNode<S>>,
    scratch: Vec<CditNode<S>>,
    children: HashMap<(NodeId, u32, u32), ChildSlot>,
    info_index: Vec<HashMap<InfoSetKey, Vec<NodeId>>>,
    dead_branches: u64,
}

impl<S: Clone + Send + Sync> Cdit<S> {
    /// Root with `C` i.i.d. samples from the initial distribution, weights `1/C`.
    /// The tree seed is drawn from `rng`.
    pub fn make_root<M, R>(model: &M, particle_count: usize, horizon: usize, rng: &mut R) -> Result<Self>
    where
        M: Posg<State = S>,
        R: Rng + ?Sized,
    {
        let seed = rng.next_u64();
        Self::with_seed(model, particle_count, horizon, seed, Storage::Full)
    }

    pub fn with_seed<M: Posg<State = S>>(
        model: &M,
        particle_count: usize,
        horizon: usize,
        seed: u64,
        storage: Storage,
    ) -> Result<Self> {
        if particle_count == 0 {
            return Err(Error::InvalidArgument("particle count must be at least 1".into()));
        }
        if particle_count > u32::MAX as usize {
            return Err(Error::InvalidArgument("particle count too large".into()));
        }
        let spec = model.spec();
        let mut rng = rng_from(derive(seed, stream::ROOT_BELIEF));
        let belief = ParticleBelief::sample_from(model, particle_count, &mut rng)?;
        let terminal_weight = belief.terminal_weight(model);
        let root = CditNode {
            depth: 0,
            belief: Arc::new(belief),
            joint_history: Vec::new(),
            terminal_weight,
            path_hash: derive(seed, 0),
            keys: (0..spec.num_players).map(InfoSetKey::root).collect(),
            mean_rewards: vec![None; spec.num_joint_actions()],
        };
        let mut info_index = vec![HashMap::new(); spec.num_players];
        let root_id = NodeId {
            index: 0,
            scratch: false,
        };
        for (p, index) in info_index.iter_mut().enumerate() {
            index.insert(root.keys[p].clone(), vec![root_id]);
        }
        Ok(Self {
            particle_count,
            horizon,
            num_players: spec.num_players,
            num_joint_actions: spec.num_joint_actions(),
            seed,
            storage,
            nodes: vec![root],
            scratch: Vec::new(),
            children: HashMap::new(),
            info_index,
            dead_branches: 0,
        })
    }

    pub fn root(&self) -> NodeId {
        NodeId {
            index: 0,
            scratch: false,
        }
    }

    pub fn particle_count(&self) -> usize {
        self.particle_count
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn storage(&self) -> Storage {
        self.storage
    }

    pub fn node(&self, id: NodeId) -> &CditNode<S> {
        if id.scratch {
            &self.scratch[id.index as usize]
        } else {
            &self.nodes[id.index as usize]
        }
    }

    fn node_mut(&mut self, id: NodeId) -> &mut CditNode<S> {
        if id.scratch {
            &mut self.scratch[id.index as usize]
        } else {
            &mut self.nodes[id.index as usize]
        }
    }

    /// Number of persistent (memoized) nodes.
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn scratch_count(&self) -> usize {
        self.scratch.len()
    }

    /// Branches that were depleted twice and excluded.
    pub fn dead_branch_count(&self) -> u64 {
        self.dead_branches
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        let n = self.node(id);
        n.depth >= self.horizon || n.terminal_weight > TERMINAL_LEAF_THRESHOLD
    }

    pub fn info_set_key(&self, id: NodeId, player: usize) -> InfoSetKey {
        self.node(id).keys[player].clone()
    }

    /// Persistent member nodes of an information set.
    pub fn info_set_members(&self, key: &InfoSetKey) -> &[NodeId] {
        self.info_index
            .get(key.player())
            .and_then(|m| m.get(key))
            .map_or(&[], |v| v.as_slice())
    }

    pub fn info_sets(&self, player: usize) -> impl Iterator<Item = &InfoSetKey> {
        self.info_index[player].keys()
    }

    /// Drops regenerable scratch nodes.
    pub fn end_iteration(&mut self) {
        self.scratch.clear();
    }

    /// Cached belief-weighted immediate reward of a joint action.
    pub fn mean_rewards<M: Posg<State = S>>(&mut self, model: &M, id: NodeId, action_index: usize) -> PlayerValues {
        if let Some(r) = &self.node(id).mean_rewards[action_index] {
            return r.clone();
        }
        let action = model.spec().joint_action_from_index(action_index);
        let r = self.node(id).belief.mean_rewards(model, &action);
        self.node_mut(id).mean_rewards[action_index] = Some(r.clone());
        r
    }

    fn child_hash(parent_hash: u64, action_index: usize, branch: usize) -> u64 {
        derive_all(parent_hash, &[action_index as u64, branch as u64])
    }

    /// Returns child `(joint_action, branch)` of `parent`, generating it on
    /// first use. A branch whose reweighting depletes twice is dead and
    /// reported as [`Error::ParticleDepletion`] on every call.
    pub fn expand_child<M: Posg<State = S>>(
        &mut self,
        model: &M,
        parent: NodeId,
        action_index: usize,
        branch: usize,
    ) -> Result<NodeId> {
        let pnode = self.node(parent);
        if pnode.depth >= self.horizon {
            return Err(Error::InvalidArgument(format!(
                "cannot expand a node at the horizon depth {}",
                self.horizon
            )));
        }
        if branch >= self.particle_count || action_index >= self.num_joint_actions {
            return Err(Error::InvalidArgument("branch or joint action out of range".into()));
        }
        let depth = pnode.depth + 1;
        let persistent = !parent.scratch
            && match self.storage {
                Storage::Full => true,
                Storage::Bounded { max_cached_depth } => depth <= max_cached_depth,
            };
        let slot_key = (parent, action_index as u32, branch as u32);
        if persistent {
            match self.children.get(&slot_key) {
                Some(ChildSlot::Live(id)) => return Ok(*id),
                Some(ChildSlot::Dead) => return Err(self.depletion_error(model, action_index)),
                None => {}
            }
        }

        let action = model.spec().joint_action_from_index(action_index);
        let hash = Self::child_hash(pnode.path_hash, action_index, branch);
        let mut made = None;
        for attempt in 0..2u64 {
            let mut rng = rng_from(derive_all(self.seed, &[stream::BRANCH, hash, attempt]));
            let (obs, states) = sample_observation_branch(&pnode.belief, &action, model, &mut rng);
            match reweight(states, pnode.belief.weights(), &action, &obs, model) {
                Ok(belief) => {
                    made = Some((obs, belief));
                    break;
                }
                Err(Error::ParticleDepletion { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
        let Some((obs, belief)) = made else {
            self.dead_branches += 1;
            if persistent {
                self.children.insert(slot_key, ChildSlot::Dead);
            }
            return Err(self.depletion_error(model, action_index));
        };

        let mut joint_history = pnode.joint_history.clone();
        joint_history.push(JointStep {
            action: action.clone(),
            branch: branch as u32,
            observation: obs.clone(),
        });
        let keys: SmallVec<[InfoSetKey; 2]> = (0..self.num_players)
            .map(|p| pnode.keys[p].child(action.player(p), obs.player(p)))
            .collect();
        let terminal_weight = belief.terminal_weight(model);
        let node = CditNode {
            depth,
            belief: Arc::new(belief),
            joint_history,
            terminal_weight,
            path_hash: hash,
            keys,
            mean_rewards: vec![None; self.num_joint_actions],
        };
        let id = if persistent {
            let id = NodeId {
                index: self.nodes.len() as u32,
                scratch: false,
            };
            for p in 0..self.num_players {
                self.info_index[p].entry(node.keys[p].clone()).or_default().push(id);
            }
            self.nodes.push(node);
            self.children.insert(slot_key, ChildSlot::Live(id));
            id
        } else {
            let id = NodeId {
                index: self.scratch.len() as u32,
                scratch: true,
            };
            self.scratch.push(node);
            id
        };
        Ok(id)
    }

    fn depletion_error<M: Posg<State = S>>(&self, model: &M, action_index: usize) -> Error {
        Error::ParticleDepletion {
            action: model.spec().joint_action_from_index(action_index),
            observation: JointObservation(SmallVec::new()),
        }
    }

    /// Materializes every branch down to the horizon. Intended for tiny games.
    pub fn expand_all<M: Posg<State = S>>(&mut self, model: &M) -> Result<()> {
        let mut stack = vec![self.root()];
        while let Some(id) = stack.pop() {
            if self.node(id).depth >= self.horizon {
                continue;
            }
            for a in 0..self.num_joint_actions {
                for k in 0..self.particle_count {
                    match self.expand_child(model, id, a, k) {
                        Ok(child) => stack.push(child),
                        Err(Error::ParticleDepletion { .. }) => {}
                        Err(e) => return Err(e),
                    }
                }
            }
        }
        Ok(())
    }

    /// Live children of `(node, joint action)` among the persistent nodes.
    pub fn cached_children(&self, id: NodeId, action_index: usize) -> Vec<NodeId> {
        (0..self.particle_count)
            .filter_map(|k| match self.children.get(&(id, action_index as u32, k as u32)) {
                Some(ChildSlot::Live(c)) => Some(*c),
                _ => None,
            })
            .collect()
    }

    /// Members of an information set weighted by the likelihood of their
    /// joint histories under the opponent's policy, with chance branches
    /// at probability `1/C` each. Two-player trees only.
    pub fn info_set_mixture<P: Policy + ?Sized>(
        &self,
        key: &InfoSetKey,
        opponent_policy: &P,
    ) -> Result<Vec<(NodeId, f64)>> {
        if self.num_players != 2 {
            return Err(Error::InvalidArgument("mixtures are defined for two players".into()));
        }
        let opponent = 1 - key.player();
        let chance = 1.0 / self.particle_count as f64;
        let mut weighted: Vec<(NodeId, f64)> = self
            .info_set_members(key)
            .iter()
            .map(|&id| {
                let node = self.node(id);
                let mut okey = InfoSetKey::root(opponent);
                let mut w = 1.0;
                for step in &node.joint_history {
                    let a = step.action.player(opponent);
                    w *= opponent_policy.probability(&okey, a) * chance;
                    okey = okey.child(a, step.observation.player(opponent));
                }
                (id, w)
            })
            .collect();
        let total: f64 = weighted.iter().map(|(_, w)| w).sum();
        if !(total > 0.0) {
            return Err(Error::EmptyMixture);
        }
        for (_, w) in &mut weighted {
            *w /= total;
        }
        Ok(weighted)
    }

    /// One line per persistent node in depth-first order:
    /// `depth <TAB> history <TAB> top-5 weights <TAB> terminal_weight`.
    /// A history step prints as `(a0,a1)#branch(o0,o1)`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let mut stack = vec![self.root()];
        while let Some(id) = stack.pop() {
            let n = self.node(id);
            let hist = if n.joint_history.is_empty() {
                "-".to_string()
            } else {
                n.joint_history
                    .iter()
                    .map(|s| format!("{}#{}{}", s.action, s.branch, s.observation))
                    .collect::<Vec<_>>()
                    .join("/")
            };
            let mut w: Vec<f64> = n.belief.weights().to_vec();
            w.sort_by(|a, b| b.total_cmp(a));
            w.truncate(5);
            let w: Vec<String> = w.iter().map(|x| format!("{x:.6}")).collect();
            let _ = writeln!(out, "{}\t{}\t{}\t{:.6}", n.depth, hist, w.join(" "), n.terminal_weight);
            let mut kids = Vec::new();
            for a in 0..self.num_joint_actions {
                kids.extend(self.cached_children(id, a));
            }
            stack.extend(kids.into_iter().rev());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{games, ContinuousTag};
    use crate::seeding::rng_from;

    #[test]
    fn single_particle_root() {
        let g = games::tiny_game();
        let tree = Cdit::make_root(&g, 1, 2, &mut rng_from(1)).unwrap();
        let root = tree.node(tree.root());
        assert_eq!(root.belief.len(), 1);
        assert_eq!(root.belief.weights(), &[1.0]);
        assert!(Cdit::make_root(&g, 0, 2, &mut rng_from(1)).is_err());
    }

    #[test]
    fn point_mass_root_particles_identical() {
        let g = games::matching_pennies(1);
        let tree = Cdit::make_root(&g, 16, 1, &mut rng_from(3)).unwrap();
        assert!(tree.node(tree.root()).belief.particles().iter().all(|&s| s == 0));
    }

    #[test]
    fn root_is_reproducible() {
        let tag = ContinuousTag::default();
        let a = Cdit::make_root(&tag, 100, 5, &mut rng_from(42)).unwrap();
        let b = Cdit::make_root(&tag, 100, 5, &mut rng_from(42)).unwrap();
        let pa = a.node(a.root()).belief.particles();
        let pb = b.node(b.root()).belief.particles();
        for (x, y) in pa.iter().zip(pb) {
            assert_eq!(x.pursuer[0].to_bits(), y.pursuer[0].to_bits());
            assert_eq!(x.evader[1].to_bits(), y.evader[1].to_bits());
        }
    }

    #[test]
    fn expansion_is_memoized() {
        let g = games::tiny_game();
        let mut tree = Cdit::with_seed(&g, 8, 2, 5, Storage::Full).unwrap();
        let root = tree.root();
        let a = tree.expand_child(&g, root, 3, 4).unwrap();
        let count = tree.node_count();
        let b = tree.expand_child(&g, root, 3, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(tree.node_count(), count);
        assert_eq!(tree.node(a).depth, 1);
        assert_eq!(tree.node(a).joint_history.len(), 1);
    }

    #[test]
    fn scratch_nodes_match_persistent_nodes() {
        let tag = ContinuousTag::default();
        let mut full = Cdit::with_seed(&tag, 20, 3, 9, Storage::Full).unwrap();
        let mut bounded = Cdit::with_seed(&tag, 20, 3, 9, Storage::Bounded { max_cached_depth: 1 }).unwrap();
        let path = [(7usize, 3usize), (20, 11), (35, 0)];
        let (mut f, mut b) = (full.root(), bounded.root());
        for &(a, k) in &path {
            f = full.expand_child(&tag, f, a, k).unwrap();
            b = bounded.expand_child(&tag, b, a, k).unwrap();
            assert_eq!(full.node(f).belief, bounded.node(b).belief);
            assert_eq!(full.node(f).joint_history, bounded.node(b).joint_history);
        }
        assert!(b.is_scratch());
        assert_eq!(bounded.node_count(), 2);
        bounded.end_iteration();
        assert_eq!(bounded.scratch_count(), 0);
    }

    #[test]
    fn expanding_past_horizon_is_rejected() {
        let g = games::tiny_game();
        let mut tree = Cdit::with_seed(&g, 2, 0, 1, Storage::Full).unwrap();
        assert!(tree.expand_child(&g, tree.root(), 0, 0).is_err());
        assert!(tree.is_leaf(tree.root()));
    }

    #[test]
    fn root_keys_are_empty() {
        let g = games::tiny_game();
        let tree = Cdit::with_seed(&g, 2, 2, 1, Storage::Full).unwrap();
        for p in 0..2 {
            let k = tree.info_set_key(tree.root(), p);
            assert_eq!(k.depth(), 0);
            assert_eq!(k.player(), p);
        }
    }

    #[test]
    fn key_encoding_round_trip() {
        let k = InfoSetKey::root(1).child(3, 2).child(0, 1);
        assert_eq!(k.encode_history(), "3:2/0:1");
        assert_eq!(InfoSetKey::decode(1, "3:2/0:1").unwrap(), k);
        assert_eq!(InfoSetKey::decode(0, "-").unwrap(), InfoSetKey::root(0));
        assert!(InfoSetKey::decode(0, "3-2").is_err());
        assert_eq!(k.parent().unwrap(), InfoSetKey::root(1).child(3, 2));
    }

    #[test]
    fn dump_lists_every_persistent_node() {
        let g = games::fig1_game();
        let mut tree = Cdit::with_seed(&g, 2, 1, 4, Storage::Full).unwrap();
        tree.expand_all(&g).unwrap();
        let dump = tree.dump();
        assert_eq!(dump.lines().count(), tree.node_count());
        assert!(dump.starts_with("0\t-\t"));
    }
}
