use std::collections::HashMap;

use super::policy::BehaviorPolicy;
use super::regret::{RegretTable, Strategy};
use crate::cdit::InfoSetKey;
use crate::model::{DiscreteOracleGame, JointAction, Posg};
use crate::{Error, Result};

/// Upper limit on joint histories enumerated per iteration.
pub const VANILLA_HISTORY_GUARD: u128 = 1_000_000;

/// Full-width CFR with exact beliefs: every joint history to depth
/// `horizon` is walked each iteration, carrying the unnormalized
/// state mass `P(s, chance part of h)`. Both players update
/// simultaneously from the same current strategies; average strategies
/// are weighted by the player's own reach.
pub fn vanilla_cfr_exact(game: &DiscreteOracleGame, horizon: usize, iterations: u64) -> Result<Vec<BehaviorPolicy>> {
    let spec = game.spec();
    if spec.num_players != 2 || !game.is_zero_sum() {
        return Err(Error::InvalidModel("vanilla CFR expects a two-player zero-sum game".into()));
    }
    let branching = (spec.num_joint_actions() * spec.num_joint_observations()) as u128;
    let mut count: u128 = 0;
    let mut level: u128 = 1;
    for _ in 0..=horizon {
        count = count.saturating_add(level);
        level = level.saturating_mul(branching);
    }
    if count > VANILLA_HISTORY_GUARD {
        return Err(Error::EnumerationTooLarge {
            count,
            limit: VANILLA_HISTORY_GUARD,
        });
    }
    let mut tables = [
        RegretTable::new(0, spec.action_counts[0]),
        RegretTable::new(1, spec.action_counts[1]),
    ];
    for _ in 0..iterations {
        let mut pass = Pass {
            game,
            horizon,
            tables: &tables,
            regret_delta: [HashMap::new(), HashMap::new()],
            strategy_delta: [HashMap::new(), HashMap::new()],
        };
        pass.rec(0, game.initial(), [InfoSetKey::root(0), InfoSetKey::root(1)], [1.0, 1.0]);
        let Pass {
            regret_delta,
            strategy_delta,
            ..
        } = pass;
        for p in 0..2 {
            let mut keys: Vec<_> = regret_delta[p].keys().cloned().collect();
            keys.sort();
            for k in keys {
                tables[p].add_regrets(&k, &regret_delta[p][&k]);
                tables[p].add_strategy(&k, &strategy_delta[p][&k], 1.0);
            }
        }
    }
    Ok(tables.iter().map(RegretTable::average_policy).collect())
}

struct Pass<'a> {
    game: &'a DiscreteOracleGame,
    horizon: usize,
    tables: &'a [RegretTable; 2],
    regret_delta: [HashMap<InfoSetKey, Vec<f64>>; 2],
    strategy_delta: [HashMap<InfoSetKey, Vec<f64>>; 2],
}

impl Pass<'_> {
    /// Returns chance-weighted expected values `Σ_s mass(s)·(future return)`
    /// under the current profile.
    fn rec(&mut self, depth: usize, mass: &[f64], keys: [InfoSetKey; 2], reach: [f64; 2]) -> [f64; 2] {
        let spec = self.game.spec();
        let ns = self.game.num_states();
        let sigma: [Strategy; 2] = [
            self.tables[0].current_strategy(&keys[0]),
            self.tables[1].current_strategy(&keys[1]),
        ];
        let disc = spec.discount.powi(depth as i32);
        let (n0, n1) = (sigma[0].len(), sigma[1].len());
        // q[a0][a1] per player.
        let mut q = vec![[0.0f64; 2]; n0 * n1];
        for a0 in 0..n0 {
            for a1 in 0..n1 {
                let action = JointAction::pair(a0, a1);
                let mut v = [0.0; 2];
                for (s, &m) in mass.iter().enumerate() {
                    if m > 0.0 {
                        let r = self.game.reward_of(s, &action);
                        v[0] += disc * m * r[0];
                        v[1] += disc * m * r[1];
                    }
                }
                let child_reach = [reach[0] * sigma[0][a0], reach[1] * sigma[1][a1]];
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
                                let c = self.rec(
                                    depth + 1,
                                    &child,
                                    [keys[0].child(a0, o0), keys[1].child(a1, o1)],
                                    child_reach,
                                );
                                v[0] += c[0];
                                v[1] += c[1];
                            }
                        }
                    }
                }
                q[a0 * n1 + a1] = v;
            }
        }
        let mut value = [0.0; 2];
        let mut own_q = [vec![0.0; n0], vec![0.0; n1]];
        for a0 in 0..n0 {
            for a1 in 0..n1 {
                let v = q[a0 * n1 + a1];
                own_q[0][a0] += sigma[1][a1] * v[0];
                own_q[1][a1] += sigma[0][a0] * v[1];
                let w = sigma[0][a0] * sigma[1][a1];
                value[0] += w * v[0];
                value[1] += w * v[1];
            }
        }
        // Chance reach is already inside `mass`; weight by the opponent's reach.
        for p in 0..2 {
            let opp = reach[1 - p];
            let r = self.regret_delta[p]
                .entry(keys[p].clone())
                .or_insert_with(|| vec![0.0; sigma[p].len()]);
            for (x, qa) in r.iter_mut().zip(&own_q[p]) {
                *x += opp * (qa - value[p]);
            }
            let s = self.strategy_delta[p]
                .entry(keys[p].clone())
                .or_insert_with(|| vec![0.0; sigma[p].len()]);
            for (x, sa) in s.iter_mut().zip(&sigma[p]) {
                *x += reach[p] * sa;
            }
        }
        value
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfr::Policy;
    use crate::model::games;

    #[test]
    fn matching_pennies_uniform() {
        let g = games::matching_pennies(1);
        let p = vanilla_cfr_exact(&g, 1, 2_000).unwrap();
        for i in 0..2 {
            assert!((p[i].probability(&InfoSetKey::root(i), 0) - 0.5).abs() < 0.01);
        }
    }

    #[test]
    fn guard() {
        let g = games::tiny_game();
        assert!(matches!(vanilla_cfr_exact(&g, 6, 1), Err(Error::EnumerationTooLarge { .. })));
    }
}
