//! External-sampling CFR over a particle CDIT.

use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use smallvec::SmallVec;

use super::policy::BehaviorPolicy;
use super::regret::{RegretTable, Strategy};
use super::sample_action;
use crate::cdit::{Cdit, NodeId, Storage, TERMINAL_LEAF_THRESHOLD};
use crate::model::Posg;
use crate::seeding::{derive, rng_from, stream};
use crate::{Error, Result};

pub const DEFAULT_SNAPSHOTS: [u64; 10] = [1, 2, 5, 10, 20, 50, 100, 200, 500, 1000];

#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig {
    pub particle_count: usize,
    pub horizon: usize,
    pub iterations: u64,
    pub seed: u64,
    pub storage: Storage,
    /// Iterations after which average policies are reported.
    pub snapshots: Vec<u64>,
}

impl SolveConfig {
    /// Full storage and the default snapshot schedule truncated to `iterations`.
    pub fn new(particle_count: usize, horizon: usize, iterations: u64, seed: u64) -> Self {
        Self {
            particle_count,
            horizon,
            iterations,
            seed,
            storage: Storage::Full,
            snapshots: DEFAULT_SNAPSHOTS.iter().copied().filter(|&t| t <= iterations).collect(),
        }
    }

    pub fn with_storage(mut self, storage: Storage) -> Self {
        self.storage = storage;
        self
    }

    pub fn with_snapshots(mut self, snapshots: Vec<u64>) -> Self {
        self.snapshots = snapshots;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("iterations must be at least 1".into()));
        }
        if self.particle_count == 0 {
            return Err(Error::InvalidArgument("particle count must be at least 1".into()));
        }
        if self.snapshots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "snapshot iterations must be strictly increasing".into(),
            ));
        }
        if self.snapshots.first() == Some(&0) {
            return Err(Error::InvalidArgument("snapshot iterations start at 1".into()));
        }
        Ok(())
    }
}

/// Average policies after `iteration` completed iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub iteration: u64,
    pub policies: Vec<BehaviorPolicy>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: u64,
    pub seed: u64,
    pub particle_count: usize,
    pub horizon: usize,
    /// Snapshot iterations actually reached.
    pub snapshot_schedule: Vec<u64>,
    /// Wall-clock seconds per iteration.
    pub iteration_seconds: Vec<f64>,
    pub policies: Vec<BehaviorPolicy>,
    pub info_sets: Vec<usize>,
    pub persistent_nodes: usize,
    pub dead_branches: u64,
    /// Node-actions whose chance branches were all depleted.
    pub depleted_subtrees: u64,
    /// Mean sampled root value of each player over its traversals.
    pub mean_root_value: Vec<f64>,
}

impl SolveReport {
    /// Key-value summary without timing, so reruns compare byte for byte.
    pub fn summary(&self) -> String {
        let schedule: Vec<String> = self.snapshot_schedule.iter().map(u64::to_string).collect();
        let info: Vec<String> = self.info_sets.iter().map(usize::to_string).collect();
        let root: Vec<String> = self.mean_root_value.iter().map(|v| format!("{v}")).collect();
        format!(
            "iterations = {}\nseed = {}\nparticles = {}\nhorizon = {}\nsnapshots = {}\n\
             info_sets = {}\npersistent_nodes = {}\ndead_branches = {}\n\
             depleted_subtrees = {}\nmean_root_value = {}\n",
            self.iterations,
            self.seed,
            self.particle_count,
            self.horizon,
            schedule.join(" "),
            info.join(" "),
            self.persistent_nodes,
            self.dead_branches,
            self.depleted_subtrees,
            root.join(" "),
        )
    }

    pub fn total_seconds(&self) -> f64 {
        self.iteration_seconds.iter().sum()
    }
}

fn check_model<M: Posg>(model: &M) -> Result<()> {
    let spec = model.spec();
    if spec.num_players != 2 || !model.is_zero_sum() {
        return Err(Error::InvalidModel(
            "the solver requires a two-player zero-sum model".into(),
        ));
    }
    Ok(())
}

/// One external-sampling traversal for `traverser`; returns the sampled
/// root value. Traverser regrets and opponent average-strategy weights in
/// `tables` are updated in place.
pub fn escfr_iteration<M: Posg, R: Rng + ?Sized>(
    model: &M,
    tree: &mut Cdit<M::State>,
    traverser: usize,
    tables: &mut [RegretTable],
    rng: &mut R,
) -> Result<f64> {
    check_model(model)?;
    let mut t = Traversal::new(model, tree, traverser, tables, rng);
    let root = t.tree.root();
    let v = t.visit(root)?;
    t.tree.end_iteration();
    Ok(v)
}

struct Traversal<'a, M: Posg, R: ?Sized> {
    model: &'a M,
    tree: &'a mut Cdit<M::State>,
    tables: &'a mut [RegretTable],
    rng: &'a mut R,
    traverser: usize,
    opponent_actions: usize,
    discounts: Vec<f64>,
    depleted: u64,
}

impl<'a, M: Posg, R: Rng + ?Sized> Traversal<'a, M, R> {
    fn new(
        model: &'a M,
        tree: &'a mut Cdit<M::State>,
        traverser: usize,
        tables: &'a mut [RegretTable],
        rng: &'a mut R,
    ) -> Self {
        let spec = model.spec();
        let gamma = spec.discount;
        let discounts = (0..=tree.horizon()).map(|d| gamma.powi(d as i32)).collect();
        Self {
            model,
            tree,
            tables,
            rng,
            traverser,
            opponent_actions: spec.action_counts[1 - traverser],
            discounts,
            depleted: 0,
        }
    }

    fn joint_index(&self, own: usize, other: usize) -> usize {
        if self.traverser == 0 {
            own * self.opponent_actions + other
        } else {
            other * self.model.spec().action_counts[1] + own
        }
    }

    /// Child at `branch`, or a uniformly drawn live replacement if that
    /// branch is dead. `None` when every branch is dead.
    fn live_child(&mut self, id: NodeId, action: usize, branch: usize) -> Result<Option<NodeId>> {
        match self.tree.expand_child(self.model, id, action, branch) {
            Ok(c) => return Ok(Some(c)),
            Err(Error::ParticleDepletion { .. }) => {}
            Err(e) => return Err(e),
        }
        let mut rest: Vec<usize> = (0..self.tree.particle_count()).filter(|&k| k != branch).collect();
        while !rest.is_empty() {
            let k = rest.swap_remove(self.rng.random_range(0..rest.len()));
            match self.tree.expand_child(self.model, id, action, k) {
                Ok(c) => return Ok(Some(c)),
                Err(Error::ParticleDepletion { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(None)
    }

    fn visit(&mut self, id: NodeId) -> Result<f64> {
        let node = self.tree.node(id);
        if node.terminal_weight > TERMINAL_LEAF_THRESHOLD {
            return Ok(0.0);
        }
        let depth = node.depth;
        let (t, o) = (self.traverser, 1 - self.traverser);
        let own_key = node.info_set_key(t).clone();
        let opp_key = node.info_set_key(o).clone();

        let sigma: Strategy = self.tables[t].current_strategy(&own_key);
        let sigma_o: Strategy = self.tables[o].current_strategy(&opp_key);
        self.tables[o].add_strategy(&opp_key, &sigma_o, 1.0);
        let a_o = sample_action(&sigma_o, self.rng);

        let expand = depth < self.tree.horizon();
        let branch = if expand {
            self.rng.random_range(0..self.tree.particle_count())
        } else {
            0
        };
        let disc = self.discounts[depth];
        let mut q: SmallVec<[f64; 8]> = SmallVec::new();
        for a_t in 0..sigma.len() {
            let ja = self.joint_index(a_t, a_o);
            let mut v = disc * self.tree.mean_rewards(self.model, id, ja)[t];
            if expand {
                match self.live_child(id, ja, branch)? {
                    Some(child) => v += self.visit(child)?,
                    None => self.depleted += 1,
                }
            }
            q.push(v);
        }
        let value: f64 = sigma.iter().zip(&q).map(|(p, v)| p * v).sum();
        let delta: SmallVec<[f64; 8]> = q.iter().map(|v| v - value).collect();
        self.tables[t].add_regrets(&own_key, &delta);
        Ok(value)
    }
}

/// Incremental ESCFR solver; iteration `t` (0-based) traverses player `t mod 2`.
pub struct EscfrSolver<'m, M: Posg> {
    model: &'m M,
    config: SolveConfig,
    tree: Cdit<M::State>,
    tables: Vec<RegretTable>,
    rng: ChaCha8Rng,
    iteration: u64,
    depleted: u64,
    root_value_sum: [f64; 2],
    root_value_count: [u64; 2],
}

impl<'m, M: Posg> EscfrSolver<'m, M> {
    pub fn new(model: &'m M, config: &SolveConfig) -> Result<Self> {
        check_model(model)?;
        config.validate()?;
        let tree = Cdit::with_seed(
            model,
            config.particle_count,
            config.horizon,
            config.seed,
            config.storage,
        )?;
        let spec = model.spec();
        Ok(Self {
            model,
            config: config.clone(),
            tree,
            tables: (0..2).map(|p| RegretTable::new(p, spec.action_counts[p])).collect(),
            rng: rng_from(derive(config.seed, stream::SOLVER)),
            iteration: 0,
            depleted: 0,
            root_value_sum: [0.0; 2],
            root_value_count: [0; 2],
        })
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn tree(&self) -> &Cdit<M::State> {
        &self.tree
    }

    pub fn tables(&self) -> &[RegretTable] {
        &self.tables
    }

    /// Runs one iteration and returns the traverser's sampled root value.
    pub fn step(&mut self) -> Result<f64> {
        let traverser = (self.iteration % 2) as usize;
        let mut t = Traversal::new(self.model, &mut self.tree, traverser, &mut self.tables, &mut self.rng);
        let root = t.tree.root();
        let v = t.visit(root)?;
        self.depleted += t.depleted;
        self.tree.end_iteration();
        self.iteration += 1;
        self.root_value_sum[traverser] += v;
        self.root_value_count[traverser] += 1;
        Ok(v)
    }

    pub fn average_policies(&self) -> Vec<BehaviorPolicy> {
        self.tables.iter().map(RegretTable::average_policy).collect()
    }

    pub fn mean_root_values(&self) -> Vec<f64> {
        (0..2)
            .map(|p| self.root_value_sum[p] / self.root_value_count[p].max(1) as f64)
            .collect()
    }

    pub fn depleted_subtrees(&self) -> u64 {
        self.depleted
    }
}

/// Builds the root, runs `config.iterations` alternating iterations and
/// returns the average policies. `on_snapshot` sees the average policies
/// at each scheduled iteration.
pub fn solve_escfr<M: Posg>(
    model: &M,
    config: &SolveConfig,
    on_snapshot: impl FnMut(&Snapshot),
) -> Result<(Vec<BehaviorPolicy>, SolveReport)> {
    EscfrSolver::new(model, config)?.run(on_snapshot)
}

impl<M: Posg> EscfrSolver<'_, M> {
    /// Runs the remaining iterations of the configured budget. The solver
    /// stays usable afterwards, e.g. to dump the tree.
    pub fn run(&mut self, mut on_snapshot: impl FnMut(&Snapshot)) -> Result<(Vec<BehaviorPolicy>, SolveReport)> {
        let iterations = self.config.iterations;
        let mut seconds = Vec::with_capacity(iterations.saturating_sub(self.iteration) as usize);
        let mut schedule = Vec::new();
        let done = self.iteration;
        let snapshots = self.config.snapshots.clone();
        let mut next = snapshots.iter().filter(|&&t| t > done).peekable();
        while self.iteration < iterations {
            let start = Instant::now();
            self.step()?;
            seconds.push(start.elapsed().as_secs_f64());
            if next.peek() == Some(&&self.iteration) {
                next.next();
                schedule.push(self.iteration);
                on_snapshot(&Snapshot {
                    iteration: self.iteration,
                    policies: self.average_policies(),
                });
            }
        }
        let policies = self.average_policies();
        let report = SolveReport {
            iterations,
            seed: self.config.seed,
            particle_count: self.config.particle_count,
            horizon: self.config.horizon,
            snapshot_schedule: schedule,
            iteration_seconds: seconds,
            policies: policies.clone(),
            info_sets: self.tables.iter().map(RegretTable::len).collect(),
            persistent_nodes: self.tree.node_count(),
            dead_branches: self.tree.dead_branch_count(),
            depleted_subtrees: self.depleted,
            mean_root_value: self.mean_root_values(),
        };
        Ok((policies, report))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cdit::InfoSetKey;
    use crate::cfr::Policy;
    use crate::model::games;

    #[test]
    fn one_step_regrets_are_advantages() {
        // Single decision: r0 = +1 on a match. Player 1 plays uniformly at
        // the start, so q(a) = ±1 depending on the sampled opponent action.
        let g = games::matching_pennies(0);
        let mut tree = Cdit::with_seed(&g, 1, 0, 3, Storage::Full).unwrap();
        let mut tables = vec![RegretTable::new(0, 2), RegretTable::new(1, 2)];
        let mut rng = rng_from(1);
        let v = escfr_iteration(&g, &mut tree, 0, &mut tables, &mut rng).unwrap();
        assert_eq!(v, 0.0);
        let rec = tables[0].record(&InfoSetKey::root(0)).unwrap();
        let mut r = rec.cumulative_regret.clone();
        r.sort_by(f64::total_cmp);
        assert_eq!(r, vec![-1.0, 1.0]);
        let opp = tables[1].record(&InfoSetKey::root(1)).unwrap();
        assert_eq!(opp.cumulative_strategy, vec![0.5, 0.5]);
        assert_eq!(opp.visit_count, 1);
    }

    #[test]
    fn single_iteration_average_policy() {
        let g = games::tiny_game();
        let cfg = SolveConfig::new(4, 2, 1, 11);
        let (policies, report) = solve_escfr(&g, &cfg, |_| {}).unwrap();
        // Only the opponent (player 1) accumulated strategy; all uniform.
        assert!(policies[0].is_empty());
        assert!(!policies[1].is_empty());
        for (_, p) in policies[1].iter() {
            assert_eq!(p, &[0.5, 0.5]);
        }
        assert_eq!(report.snapshot_schedule, vec![1]);
    }

    #[test]
    fn rejects_general_sum_models() {
        let mp = games::matching_pennies(0);
        let spec = mp.spec().clone();
        let g = crate::model::DiscreteOracleGame::new(
            "cooperative",
            spec,
            1,
            vec![1.0],
            vec![vec![1.0]; 4],
            vec![vec![vec![1.0]; 4], vec![vec![1.0]; 4]],
            vec![vec![1.0, 1.0]; 4],
        )
        .unwrap();
        let cfg = SolveConfig::new(2, 1, 1, 0);
        assert!(matches!(solve_escfr(&g, &cfg, |_| {}), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn rejects_bad_schedule() {
        let g = games::tiny_game();
        let cfg = SolveConfig::new(2, 1, 10, 0).with_snapshots(vec![5, 5]);
        assert!(solve_escfr(&g, &cfg, |_| {}).is_err());
        let cfg = SolveConfig::new(2, 1, 0, 0);
        assert!(solve_escfr(&g, &cfg, |_| {}).is_err());
    }

    #[test]
    fn matching_pennies_converges() {
        let g = games::matching_pennies(1);
        let cfg = SolveConfig::new(1, 1, 10_000, 5);
        let (policies, _) = solve_escfr(&g, &cfg, |_| {}).unwrap();
        for p in 0..2 {
            let root = policies[p].probability(&InfoSetKey::root(p), 0);
            assert!((root - 0.5).abs() < 0.05, "player {p}: {root}");
        }
    }

    #[test]
    fn snapshots_and_storage_modes_agree() {
        let g = games::tiny_game();
        let base = SolveConfig::new(6, 2, 50, 21);
        let mut snaps = Vec::new();
        let (full, _) = solve_escfr(&g, &base, |s| snaps.push(s.clone())).unwrap();
        let bounded = base.clone().with_storage(Storage::Bounded { max_cached_depth: 0 });
        let (b, report) = solve_escfr(&g, &bounded, |_| {}).unwrap();
        assert_eq!(full, b);
        assert_eq!(report.persistent_nodes, 1);
        let iters: Vec<u64> = snaps.iter().map(|s| s.iteration).collect();
        assert_eq!(iters, vec![1, 2, 5, 10, 20, 50]);
        assert_eq!(snaps.last().unwrap().policies, full);
    }
}
