//! Exact game-theoretic measurement for small instances: pure-policy
//! catalogs, payoff matrices, deviation incentives and NashConv.
//!
//! Two-player throughout. Player `i`'s matrix is indexed by (own pure
//! policy, opponent pure policy).

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use ndarray::{Array1, Array2, ArrayView1};

use crate::cdit::{Cdit, InfoSetKey, NodeId, TERMINAL_LEAF_THRESHOLD};
use crate::cfr::{BehaviorPolicy, Policy, PurePolicy};
use crate::model::{DiscreteOracleGame, JointAction, Posg, PosgSpec};
use crate::{Error, Result};

/// Upper limit on catalog size per player.
pub const POLICY_GUARD: u128 = 100_000;
/// Upper limit on joint histories walked by exact evaluation.
pub const HISTORY_GUARD: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct NormalFormGame {
    payoffs: [Array2<f64>; 2],
}

/// `E^i = A^i − Â^i`, stored as a game so the same incentive code applies.
pub type ErrorMatrix = NormalFormGame;

impl NormalFormGame {
    /// `a0` is `n0 × n1`, `a1` is `n1 × n0`.
    pub fn new(a0: Array2<f64>, a1: Array2<f64>) -> Result<Self> {
        if a0.nrows() != a1.ncols() || a0.ncols() != a1.nrows() {
            return Err(Error::InvalidArgument(format!(
                "payoff shapes {:?} and {:?} are inconsistent",
                a0.shape(),
                a1.shape()
            )));
        }
        if a0.is_empty() {
            return Err(Error::InvalidArgument("empty payoff matrix".into()));
        }
        Ok(Self { payoffs: [a0, a1] })
    }

    /// Zero-sum game from the row player's matrix.
    pub fn zero_sum(a0: Array2<f64>) -> Self {
        let a1 = a0.t().mapv(|x| -x);
        Self { payoffs: [a0, a1] }
    }

    pub fn payoff(&self, player: usize) -> &Array2<f64> {
        &self.payoffs[player]
    }

    pub fn num_policies(&self, player: usize) -> usize {
        self.payoffs[player].nrows()
    }

    /// `A¹_{j,k} = −A²_{k,j}` within `tol`.
    pub fn is_zero_sum(&self, tol: f64) -> bool {
        self.payoffs[0]
            .indexed_iter()
            .all(|((j, k), &x)| (x + self.payoffs[1][[k, j]]).abs() <= tol)
    }

    pub fn error_matrix(exact: &Self, estimate: &Self) -> Result<ErrorMatrix> {
        if exact.payoffs[0].shape() != estimate.payoffs[0].shape() {
            return Err(Error::InvalidArgument("matrix shapes differ".into()));
        }
        Ok(Self {
            payoffs: [
                &exact.payoffs[0] - &estimate.payoffs[0],
                &exact.payoffs[1] - &estimate.payoffs[1],
            ],
        })
    }

    /// Largest absolute entry of player `i`'s matrix.
    pub fn max_abs(&self, player: usize) -> f64 {
        self.payoffs[player].iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// `π^iᵀ A^i π^{-i}`.
    pub fn value(&self, pi: &[Vec<f64>], player: usize) -> f64 {
        let u = self.payoffs[player].dot(&ArrayView1::from(&pi[1 - player][..]));
        ArrayView1::from(&pi[player][..]).dot(&u)
    }

    /// Matrix rows as CSV: `policy,k0,k1,...` header, then one row per own policy.
    pub fn to_csv(&self, player: usize) -> String {
        let m = &self.payoffs[player];
        let mut out = String::from("policy");
        for k in 0..m.ncols() {
            let _ = write!(out, ",k{k}");
        }
        out.push('\n');
        for (j, row) in m.outer_iter().enumerate() {
            let _ = write!(out, "{j}");
            for x in row {
                let _ = write!(out, ",{x}");
            }
            out.push('\n');
        }
        out
    }
}

/// `max_{π'} π'ᵀA^iπ^{-i} − π^iᵀA^iπ^{-i}`, by matrix algebra.
pub fn deviation_incentive(game: &NormalFormGame, pi: &[Vec<f64>], player: usize) -> f64 {
    let u: Array1<f64> = game.payoffs[player].dot(&ArrayView1::from(&pi[1 - player][..]));
    let best = u.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    best - ArrayView1::from(&pi[player][..]).dot(&u)
}

/// Same quantity by explicit loops over pure deviations.
pub fn deviation_incentive_loop(game: &NormalFormGame, pi: &[Vec<f64>], player: usize) -> f64 {
    let a = &game.payoffs[player];
    let other = &pi[1 - player];
    let mut best = f64::NEG_INFINITY;
    let mut current = 0.0;
    for j in 0..a.nrows() {
        let mut u = 0.0;
        for (k, &q) in other.iter().enumerate() {
            u += a[[j, k]] * q;
        }
        best = best.max(u);
        current += pi[player][j] * u;
    }
    best - current
}

pub fn nashconv(game: &NormalFormGame, pi: &[Vec<f64>]) -> f64 {
    (0..2).map(|i| deviation_incentive(game, pi, i)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lemma1Report {
    pub delta_a: [f64; 2],
    pub delta_ahat: [f64; 2],
    pub delta_e: [f64; 2],
    pub e_inf: [f64; 2],
    /// `NashConv_A(π)`.
    pub lhs: f64,
    /// `Σ_i δ^i_Â + δ^i_E`.
    pub rhs_tight: f64,
    /// `Σ_i δ^i_Â + 2‖E^i‖_∞`.
    pub rhs_inf: f64,
    pub all_hold: bool,
}

/// Checks `δ^i_A ≤ δ^i_Â + δ^i_E ≤ δ^i_Â + 2‖E^i‖_∞` per player and the
/// summed NashConv form, allowing `1e-12` of rounding slack.
pub fn lemma1_check(exact: &NormalFormGame, estimate: &NormalFormGame, pi: &[Vec<f64>]) -> Result<Lemma1Report> {
    const SLACK: f64 = 1e-12;
    let e = NormalFormGame::error_matrix(exact, estimate)?;
    let mut r = Lemma1Report {
        delta_a: [0.0; 2],
        delta_ahat: [0.0; 2],
        delta_e: [0.0; 2],
        e_inf: [0.0; 2],
        lhs: 0.0,
        rhs_tight: 0.0,
        rhs_inf: 0.0,
        all_hold: true,
    };
    for i in 0..2 {
        r.delta_a[i] = deviation_incentive(exact, pi, i);
        r.delta_ahat[i] = deviation_incentive(estimate, pi, i);
        r.delta_e[i] = deviation_incentive(&e, pi, i);
        r.e_inf[i] = e.max_abs(i);
        let tight = r.delta_ahat[i] + r.delta_e[i];
        let loose = r.delta_ahat[i] + 2.0 * r.e_inf[i];
        r.all_hold &= r.delta_a[i] <= tight + SLACK && tight <= loose + SLACK;
        r.lhs += r.delta_a[i];
        r.rhs_tight += tight;
        r.rhs_inf += loose;
    }
    r.all_hold &= r.lhs <= r.rhs_tight + SLACK && r.rhs_tight <= r.rhs_inf + SLACK;
    Ok(r)
}

/// Number of reduced pure policies: decisions only at private histories
/// consistent with the policy's own earlier choices. Saturates at `u128::MAX`.
pub fn pure_policy_count(actions: usize, observations: usize, horizon: usize) -> u128 {
    let mut n: u128 = actions as u128;
    for _ in 0..horizon {
        let mut sub: u128 = 1;
        for _ in 0..observations {
            sub = sub.saturating_mul(n);
        }
        n = (actions as u128).saturating_mul(sub);
    }
    n
}

/// Every reduced deterministic policy of `player` over private histories
/// of depth `0..=horizon`.
pub fn enumerate_pure_policies(spec: &PosgSpec, player: usize, horizon: usize) -> Result<Vec<PurePolicy>> {
    let (na, no) = (spec.action_counts[player], spec.observation_counts[player]);
    let count = pure_policy_count(na, no, horizon);
    if count > POLICY_GUARD {
        return Err(Error::EnumerationTooLarge {
            count,
            limit: POLICY_GUARD,
        });
    }
    let decide = |key: &InfoSetKey| key.depth() <= horizon;
    let next = |key: &InfoSetKey, a: usize| -> Vec<InfoSetKey> {
        if key.depth() < horizon {
            (0..no).map(|o| key.child(a, o)).collect()
        } else {
            Vec::new()
        }
    };
    Ok(build_catalog(player, na, &decide, &next))
}

/// Surrogate catalog: decisions only at `player`'s private histories that
/// occur among the tree's persistent nodes; action 0 everywhere else.
pub fn enumerate_surrogate_policies<S: Clone + Send + Sync>(
    tree: &Cdit<S>,
    spec: &PosgSpec,
    player: usize,
) -> Result<Vec<PurePolicy>> {
    let na = spec.action_counts[player];
    let present: HashSet<InfoSetKey> = tree.info_sets(player).cloned().collect();
    let mut by_parent: HashMap<(InfoSetKey, usize), Vec<InfoSetKey>> = HashMap::new();
    for key in &present {
        if let (Some(parent), Some(&(a, _))) = (key.parent(), key.history.last()) {
            by_parent.entry((parent, a as usize)).or_default().push(key.clone());
        }
    }
    for v in by_parent.values_mut() {
        v.sort();
    }
    // Count before building.
    fn count(key: &InfoSetKey, na: usize, by_parent: &HashMap<(InfoSetKey, usize), Vec<InfoSetKey>>) -> u128 {
        let mut total: u128 = 0;
        for a in 0..na {
            let mut n: u128 = 1;
            for c in by_parent.get(&(key.clone(), a)).into_iter().flatten() {
                n = n.saturating_mul(count(c, na, by_parent));
            }
            total = total.saturating_add(n);
        }
        total
    }
    let root = InfoSetKey::root(player);
    let n = count(&root, na, &by_parent);
    if n > POLICY_GUARD {
        return Err(Error::EnumerationTooLarge {
            count: n,
            limit: POLICY_GUARD,
        });
    }
    let decide = |key: &InfoSetKey| present.contains(key);
    let next = |key: &InfoSetKey, a: usize| by_parent.get(&(key.clone(), a)).cloned().unwrap_or_default();
    Ok(build_catalog(player, na, &decide, &next))
}

fn build_catalog(
    player: usize,
    num_actions: usize,
    decide: &dyn Fn(&InfoSetKey) -> bool,
    next: &dyn Fn(&InfoSetKey, usize) -> Vec<InfoSetKey>,
) -> Vec<PurePolicy> {
    type Partial = Vec<(InfoSetKey, usize)>;
    fn rec(
        key: &InfoSetKey,
        num_actions: usize,
        decide: &dyn Fn(&InfoSetKey) -> bool,
        next: &dyn Fn(&InfoSetKey, usize) -> Vec<InfoSetKey>,
    ) -> Vec<Partial> {
        if !decide(key) {
            return vec![Vec::new()];
        }
        let mut out = Vec::new();
        for a in 0..num_actions {
            let mut combos: Vec<Partial> = vec![vec![(key.clone(), a)]];
            for child in next(key, a) {
                let subs = rec(&child, num_actions, decide, next);
                combos = combos
                    .iter()
                    .flat_map(|c| {
                        subs.iter().map(move |s| {
                            let mut v = c.clone();
                            v.extend(s.iter().cloned());
                            v
                        })
                    })
                    .collect();
            }
            out.extend(combos);
        }
        out
    }
    rec(&InfoSetKey::root(player), num_actions, decide, next)
        .into_iter()
        .map(|choices| PurePolicy {
            player,
            num_actions,
            choices: choices.into_iter().collect(),
            default_action: 0,
        })
        .collect()
}

/// Probability a behavior policy assigns to each reduced pure policy of a
/// full catalog (the realization-equivalent mixture).
pub fn realization_weights(catalog: &[PurePolicy], behavior: &impl Policy) -> Vec<f64> {
    catalog
        .iter()
        .map(|sigma| {
            sigma
                .choices
                .iter()
                .map(|(k, &a)| behavior.probability(k, a))
                .product()
        })
        .collect()
}

fn history_count(spec: &PosgSpec, horizon: usize) -> u128 {
    let branching = (spec.num_joint_actions() * spec.num_joint_observations()) as u128;
    let mut total: u128 = 0;
    let mut level: u128 = 1;
    for _ in 0..=horizon {
        total = total.saturating_add(level);
        level = level.saturating_mul(branching);
    }
    total
}

/// `U^i(π) = E[Σ_{t=0}^{D} γ^t r^i(s_t, a_t)]` by exhaustive expectation
/// over the finite chance tree.
pub fn exact_utility(
    game: &DiscreteOracleGame,
    p0: &(impl Policy + ?Sized),
    p1: &(impl Policy + ?Sized),
    horizon: usize,
) -> Result<[f64; 2]> {
    let count = history_count(game.spec(), horizon);
    if count > HISTORY_GUARD {
        return Err(Error::EnumerationTooLarge {
            count,
            limit: HISTORY_GUARD,
        });
    }
    let eval = ExactEval {
        game,
        horizon,
        gamma: game.spec().discount,
    };
    Ok(eval.rec(
        0,
        game.initial(),
        &InfoSetKey::root(0),
        &InfoSetKey::root(1),
        p0,
        p1,
    ))
}

struct ExactEval<'a> {
    game: &'a DiscreteOracleGame,
    horizon: usize,
    gamma: f64,
}

impl ExactEval<'_> {
    fn rec(
        &self,
        depth: usize,
        mass: &[f64],
        k0: &InfoSetKey,
        k1: &InfoSetKey,
        p0: &(impl Policy + ?Sized),
        p1: &(impl Policy + ?Sized),
    ) -> [f64; 2] {
        let spec = self.game.spec();
        let ns = self.game.num_states();
        let d0 = p0.distribution(k0);
        let d1 = p1.distribution(k1);
        let disc = self.gamma.powi(depth as i32);
        let mut out = [0.0; 2];
        for (a0, &w0) in d0.iter().enumerate() {
            for (a1, &w1) in d1.iter().enumerate() {
                let w = w0 * w1;
                if w == 0.0 {
                    continue;
                }
                let action = JointAction::pair(a0, a1);
                let mut v = [0.0; 2];
                for (s, &m) in mass.iter().enumerate() {
                    if m > 0.0 {
                        let r = self.game.reward_of(s, &action);
                        v[0] += disc * m * r[0];
                        v[1] += disc * m * r[1];
                    }
                }
                if depth < self.horizon {
                    let mut pred = vec![0.0; ns];
                    for (s, &m) in mass.iter().enumerate() {
                        if m > 0.0 {
                            for (sp, &t) in self.game.transition_row(s, &action).iter().enumerate() {
                                pred[sp] += m * t;
                            }
                        }
                    }
                    for o0 in 0..spec.observation_counts[0] {
                        for o1 in 0..spec.observation_counts[1] {
                            let child: Vec<f64> = pred
                                .iter()
                                .enumerate()
                                .map(|(sp, &m)| {
                                    m * self.game.observation_row(0, &action, sp)[o0]
                                        * self.game.observation_row(1, &action, sp)[o1]
                                })
                                .collect();
                            if child.iter().sum::<f64>() > 0.0 {
                                let c = self.rec(depth + 1, &child, &k0.child(a0, o0), &k1.child(a1, o1), p0, p1);
                                v[0] += c[0];
                                v[1] += c[1];
                            }
                        }
                    }
                }
                out[0] += w * v[0];
                out[1] += w * v[1];
            }
        }
        out
    }
}

/// `A^i_{j,k} = U^i(σ^i_j, σ^{-i}_k)` over the given catalogs.
pub fn exact_payoff_matrix(
    game: &DiscreteOracleGame,
    catalogs: &[Vec<PurePolicy>],
    horizon: usize,
) -> Result<NormalFormGame> {
    let (n0, n1) = (catalogs[0].len(), catalogs[1].len());
    let mut a0 = Array2::zeros((n0, n1));
    let mut a1 = Array2::zeros((n1, n0));
    for (j, s0) in catalogs[0].iter().enumerate() {
        for (k, s1) in catalogs[1].iter().enumerate() {
            let u = exact_utility(game, s0, s1, horizon)?;
            a0[[j, k]] = u[0];
            a1[[k, j]] = u[1];
        }
    }
    NormalFormGame::new(a0, a1)
}

/// Utility of a joint policy evaluated on the particle tree: belief-mean
/// rewards, averaging over live chance branches. Missing branches are
/// expanded on demand.
pub fn particle_tree_utility<M: Posg>(
    tree: &mut Cdit<M::State>,
    model: &M,
    p0: &(impl Policy + ?Sized),
    p1: &(impl Policy + ?Sized),
) -> Result<[f64; 2]> {
    let root = tree.root();
    tree_rec(tree, model, root, p0, p1)
}

fn tree_rec<M: Posg>(
    tree: &mut Cdit<M::State>,
    model: &M,
    id: NodeId,
    p0: &(impl Policy + ?Sized),
    p1: &(impl Policy + ?Sized),
) -> Result<[f64; 2]> {
    let node = tree.node(id);
    if node.terminal_weight > TERMINAL_LEAF_THRESHOLD {
        return Ok([0.0; 2]);
    }
    let depth = node.depth;
    let d0 = p0.distribution(node.info_set_key(0));
    let d1 = p1.distribution(node.info_set_key(1));
    let spec = model.spec();
    let disc = spec.discount.powi(depth as i32);
    let expand = depth < tree.horizon();
    let mut out = [0.0; 2];
    for (a0, &w0) in d0.iter().enumerate() {
        for (a1, &w1) in d1.iter().enumerate() {
            let w = w0 * w1;
            if w == 0.0 {
                continue;
            }
            let ja = a0 * spec.action_counts[1] + a1;
            let r = tree.mean_rewards(model, id, ja);
            let mut v = [disc * r[0], disc * r[1]];
            if expand {
                let mut sum = [0.0; 2];
                let mut live = 0usize;
                for k in 0..tree.particle_count() {
                    match tree.expand_child(model, id, ja, k) {
                        Ok(child) => {
                            let c = tree_rec(tree, model, child, p0, p1)?;
                            sum[0] += c[0];
                            sum[1] += c[1];
                            live += 1;
                        }
                        Err(Error::ParticleDepletion { .. }) => {}
                        Err(e) => return Err(e),
                    }
                }
                if live > 0 {
                    v[0] += sum[0] / live as f64;
                    v[1] += sum[1] / live as f64;
                }
            }
            out[0] += w * v[0];
            out[1] += w * v[1];
        }
    }
    Ok(out)
}

/// `Â^i_{j,k}` from the particle tree.
pub fn estimated_payoff_matrix<M: Posg>(
    tree: &mut Cdit<M::State>,
    model: &M,
    catalogs: &[Vec<PurePolicy>],
) -> Result<NormalFormGame> {
    let (n0, n1) = (catalogs[0].len(), catalogs[1].len());
    let mut a0 = Array2::zeros((n0, n1));
    let mut a1 = Array2::zeros((n1, n0));
    for (j, s0) in catalogs[0].iter().enumerate() {
        for (k, s1) in catalogs[1].iter().enumerate() {
            let u = particle_tree_utility(tree, model, s0, s1)?;
            a0[[j, k]] = u[0];
            a1[[k, j]] = u[1];
        }
    }
    NormalFormGame::new(a0, a1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactExploitability {
    /// `U^i(π)`.
    pub values: [f64; 2],
    /// `max_σ U^i(σ, π^{-i})` over the full pure catalog.
    pub best_responses: [f64; 2],
    pub nashconv: f64,
}

/// Exact NashConv of a behavior profile via pure best responses.
pub fn exact_nashconv(
    game: &DiscreteOracleGame,
    policies: &[BehaviorPolicy],
    horizon: usize,
) -> Result<ExactExploitability> {
    let catalogs = [
        enumerate_pure_policies(game.spec(), 0, horizon)?,
        enumerate_pure_policies(game.spec(), 1, horizon)?,
    ];
    exact_nashconv_with(game, policies, &catalogs, horizon)
}

pub fn exact_nashconv_with(
    game: &DiscreteOracleGame,
    policies: &[BehaviorPolicy],
    catalogs: &[Vec<PurePolicy>],
    horizon: usize,
) -> Result<ExactExploitability> {
    let values = exact_utility(game, &policies[0], &policies[1], horizon)?;
    let mut best = [f64::NEG_INFINITY; 2];
    for sigma in &catalogs[0] {
        best[0] = best[0].max(exact_utility(game, sigma, &policies[1], horizon)?[0]);
    }
    for sigma in &catalogs[1] {
        best[1] = best[1].max(exact_utility(game, &policies[0], sigma, horizon)?[1]);
    }
    Ok(ExactExploitability {
        values,
        best_responses: best,
        nashconv: (best[0] - values[0]) + (best[1] - values[1]),
    })
}
