//! Finite tabular POSGs used as exact oracles.
//!
//! Text format (whitespace separated, `#` starts a comment):
//!
//! ```text
//! states 2
//! actions 2 2
//! observations 2 2
//! horizon 2
//! discount 0.95
//! initial
//! 0.5 0.5
//! transition            # one row per (s, a): T(. | s, a) over s'
//! ...
//! observation 0         # one row per (a, s'): Z^0(. | a, s')
//! ...
//! observation 1
//! ...
//! reward                # one row per (s, a): r^i(s, a) for every player i
//! ...
//! ```
//!
//! Rows iterate the first index slowest; joint actions are mixed-radix with
//! player 0 most significant.

use std::fmt::Write as _;

use rand::Rng;
use smallvec::SmallVec;

use super::{JointAction, JointObservation, PlayerValues, Posg, PosgSpec};
use crate::{Error, Result};

const ROW_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteOracleGame {
    name: String,
    spec: PosgSpec,
    num_states: usize,
    initial: Vec<f64>,
    /// `[s * |A| + a][s']`
    transition: Vec<Vec<f64>>,
    /// `[player][a * |S| + s'][o]`
    observation: Vec<Vec<Vec<f64>>>,
    /// `[s * |A| + a][player]`
    reward: Vec<PlayerValues>,
    zero_sum: bool,
    joint_actions: usize,
}

impl DiscreteOracleGame {
    /// Builds and validates a game. Reward bounds in `spec` are recomputed
    /// from the table.
    pub fn new(
        name: impl Into<String>,
        mut spec: PosgSpec,
        num_states: usize,
        initial: Vec<f64>,
        transition: Vec<Vec<f64>>,
        observation: Vec<Vec<Vec<f64>>>,
        reward: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidModel(m));
        if num_states == 0 {
            return bad("a game needs at least one state".into());
        }
        let n = spec.num_players;
        let na = spec.num_joint_actions();
        if reward.len() != num_states * na || reward.iter().any(|r| r.len() != n) {
            return bad("reward table must have |S|*|A| rows of num_players entries".into());
        }
        spec.reward_bounds = (0..n)
            .map(|p| {
                reward.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                    (lo.min(r[p]), hi.max(r[p]))
                })
            })
            .collect();
        spec.validate()?;
        check_distribution("initial", &initial, num_states)?;
        if transition.len() != num_states * na {
            return bad("transition table must have |S|*|A| rows".into());
        }
        for (i, row) in transition.iter().enumerate() {
            check_distribution(&format!("transition row {i}"), row, num_states)?;
        }
        if observation.len() != n {
            return bad("one observation table per player is required".into());
        }
        for (p, table) in observation.iter().enumerate() {
            if table.len() != na * num_states {
                return bad(format!("observation table {p} must have |A|*|S| rows"));
            }
            for (i, row) in table.iter().enumerate() {
                check_distribution(
                    &format!("observation {p} row {i}"),
                    row,
                    spec.observation_counts[p],
                )?;
            }
        }
        let zero_sum = reward.iter().all(|r| r.iter().sum::<f64>().abs() < 1e-12);
        Ok(Self {
            name: name.into(),
            spec,
            num_states,
            initial,
            transition,
            observation,
            reward: reward.into_iter().map(SmallVec::from_vec).collect(),
            zero_sum,
            joint_actions: na,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.spec.horizon = horizon;
        self
    }

    pub fn transition_row(&self, state: usize, action: &JointAction) -> &[f64] {
        &self.transition[state * self.joint_actions + self.spec.joint_action_index(action)]
    }

    fn transition_row_by_index(&self, state: usize, ja: usize) -> &[f64] {
        &self.transition[state * self.joint_actions + ja]
    }

    pub fn observation_row(&self, player: usize, action: &JointAction, next: usize) -> &[f64] {
        &self.observation[player][self.spec.joint_action_index(action) * self.num_states + next]
    }

    pub fn reward_of(&self, state: usize, action: &JointAction) -> &[f64] {
        &self.reward[state * self.joint_actions + self.spec.joint_action_index(action)]
    }

    /// `T(s' | s, a)`.
    pub fn transition_prob(&self, state: usize, action: &JointAction, next: usize) -> f64 {
        self.transition_row(state, action)[next]
    }

    pub fn parse(text: &str) -> Result<Self> {
        Parser::new(text).parse()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let s = &self.spec;
        let join = |xs: &mut dyn Iterator<Item = String>| xs.collect::<Vec<_>>().join(" ");
        let _ = writeln!(out, "# {}", self.name);
        let _ = writeln!(out, "states {}", self.num_states);
        let _ = writeln!(out, "actions {}", join(&mut s.action_counts.iter().map(|x| x.to_string())));
        let _ = writeln!(
            out,
            "observations {}",
            join(&mut s.observation_counts.iter().map(|x| x.to_string()))
        );
        let _ = writeln!(out, "horizon {}", s.horizon);
        let _ = writeln!(out, "discount {}", s.discount);
        let _ = writeln!(out, "initial");
        let _ = writeln!(out, "{}", join(&mut self.initial.iter().map(|x| x.to_string())));
        let _ = writeln!(out, "transition");
        for row in &self.transition {
            let _ = writeln!(out, "{}", join(&mut row.iter().map(|x| x.to_string())));
        }
        for (p, table) in self.observation.iter().enumerate() {
            let _ = writeln!(out, "observation {p}");
            for row in table {
                let _ = writeln!(out, "{}", join(&mut row.iter().map(|x| x.to_string())));
            }
        }
        let _ = writeln!(out, "reward");
        for row in &self.reward {
            let _ = writeln!(out, "{}", join(&mut row.iter().map(|x| x.to_string())));
        }
        out
    }
}

fn check_distribution(what: &str, row: &[f64], len: usize) -> Result<()> {
    if row.len() != len {
        return Err(Error::InvalidModel(format!(
            "{what}: expected {len} entries, found {}",
            row.len()
        )));
    }
    if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidModel(format!("{what}: probability outside [0, 1]")));
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > ROW_TOL {
        return Err(Error::InvalidModel(format!("{what}: sums to {total}, not 1")));
    }
    Ok(())
}

fn sample_row<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

impl Posg for DiscreteOracleGame {
    type State = usize;

    fn spec(&self) -> &PosgSpec {
        &self.spec
    }

    fn name(&self) -> String {
        self.name.clone()
    }

    fn sample_initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_row(&self.initial, rng)
    }

    fn is_terminal(&self, _state: &usize) -> bool {
        false
    }

    fn rewards(&self, state: &usize, action: &JointAction) -> PlayerValues {
        SmallVec::from_slice(self.reward_of(*state, action))
    }

    fn sample_next_state<R: Rng + ?Sized>(&self, state: &usize, action: &JointAction, rng: &mut R) -> usize {
        sample_row(
            self.transition_row_by_index(*state, self.spec.joint_action_index(action)),
            rng,
        )
    }

    fn player_observation_likelihood(
        &self,
        player: usize,
        action: &JointAction,
        next: &usize,
        observation: usize,
    ) -> f64 {
        self.observation_row(player, action, *next)
            .get(observation)
            .copied()
            .unwrap_or(0.0)
    }

    fn sample_player_observation<R: Rng + ?Sized>(
        &self,
        player: usize,
        action: &JointAction,
        next: &usize,
        rng: &mut R,
    ) -> usize {
        sample_row(self.observation_row(player, action, *next), rng)
    }

    fn is_zero_sum(&self) -> bool {
        self.zero_sum
    }

    fn propagate_batch<R: Rng + ?Sized>(&self, states: &[usize], action: &JointAction, rng: &mut R) -> Vec<usize> {
        let ja = self.spec.joint_action_index(action);
        states
            .iter()
            .map(|&s| sample_row(self.transition_row_by_index(s, ja), rng))
            .collect()
    }

    fn weight_by_likelihood(
        &self,
        action: &JointAction,
        next_states: &[usize],
        observation: &JointObservation,
        weights: &mut [f64],
    ) {
        let base = self.spec.joint_action_index(action) * self.num_states;
        for (&s, w) in next_states.iter().zip(weights.iter_mut()) {
            if *w != 0.0 {
                for (p, &o) in observation.0.iter().enumerate() {
                    *w *= self.observation[p][base + s].get(o).copied().unwrap_or(0.0);
                }
            }
        }
    }

    fn weighted_rewards(&self, states: &[usize], weights: &[f64], action: &JointAction) -> PlayerValues {
        // Aggregate weight per state first; rewards are a per-state table.
        let mut mass = vec![0.0; self.num_states];
        for (&s, &w) in states.iter().zip(weights) {
            mass[s] += w;
        }
        let ja = self.spec.joint_action_index(action);
        let n = self.spec.num_players;
        let mut out = PlayerValues::from_elem(0.0, n);
        for (s, &m) in mass.iter().enumerate() {
            if m != 0.0 {
                let r = &self.reward[s * self.joint_actions + ja];
                for p in 0..n {
                    out[p] += m * r[p];
                }
            }
        }
        out
    }
}

struct Parser<'a> {
    lines: Vec<(usize, Vec<&'a str>)>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .filter_map(|(i, l)| {
                let l = l.split('#').next().unwrap_or("");
                let toks: Vec<&str> = l.split_whitespace().collect();
                (!toks.is_empty()).then_some((i + 1, toks))
            })
            .collect();
        Self { lines, pos: 0 }
    }

    fn err<T>(&self, line: usize, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            line,
            message: message.into(),
        })
    }

    fn next_line(&mut self) -> Result<(usize, Vec<&'a str>)> {
        let line = self.lines.get(self.pos).cloned();
        self.pos += 1;
        match line {
            Some(l) => Ok(l),
            None => self.err(self.lines.last().map_or(0, |l| l.0), "unexpected end of input"),
        }
    }

    fn header(&mut self, key: &str) -> Result<Vec<usize>> {
        let (ln, toks) = self.next_line()?;
        if toks[0] != key {
            return self.err(ln, format!("expected `{key}`, found `{}`", toks[0]));
        }
        toks[1..]
            .iter()
            .map(|t| t.parse::<usize>().or_else(|_| self.err(ln, format!("bad integer `{t}`"))))
            .collect()
    }

    fn section(&mut self, key: &str, arg: Option<usize>) -> Result<()> {
        let (ln, toks) = self.next_line()?;
        let ok = toks[0] == key
            && match arg {
                None => toks.len() == 1,
                Some(a) => toks.len() == 2 && toks[1].parse::<usize>().ok() == Some(a),
            };
        if !ok {
            let want = arg.map_or(key.to_string(), |a| format!("{key} {a}"));
            return self.err(ln, format!("expected section `{want}`"));
        }
        Ok(())
    }

    fn rows(&mut self, count: usize, width: usize) -> Result<Vec<Vec<f64>>> {
        (0..count)
            .map(|_| {
                let (ln, toks) = self.next_line()?;
                if toks.len() != width {
                    return self.err(ln, format!("expected {width} values, found {}", toks.len()));
                }
                toks.iter()
                    .map(|t| t.parse::<f64>().or_else(|_| self.err(ln, format!("bad number `{t}`"))))
                    .collect()
            })
            .collect()
    }

    fn parse(mut self) -> Result<DiscreteOracleGame> {
        let states = self.header("states")?;
        let actions = self.header("actions")?;
        let observations = self.header("observations")?;
        let horizon = self.header("horizon")?;
        let (ln, toks) = self.next_line()?;
        if toks[0] != "discount" || toks.len() != 2 {
            return self.err(ln, "expected `discount <value>`");
        }
        let discount: f64 = toks[1]
            .parse()
            .or_else(|_| self.err(ln, "bad discount"))?;
        if states.len() != 1 || horizon.len() != 1 {
            return self.err(ln, "`states` and `horizon` take one value");
        }
        let n = actions.len();
        if observations.len() != n {
            return self.err(ln, "`actions` and `observations` must list the same players");
        }
        let ns = states[0];
        let spec = PosgSpec {
            num_players: n,
            action_counts: actions,
            observation_counts: observations,
            horizon: horizon[0],
            discount,
            reward_bounds: vec![(0.0, 0.0); n],
        };
        let na = spec.num_joint_actions();
        self.section("initial", None)?;
        let initial = self.rows(1, ns)?.remove(0);
        self.section("transition", None)?;
        let transition = self.rows(ns * na, ns)?;
        let mut observation = Vec::with_capacity(n);
        for p in 0..n {
            self.section("observation", Some(p))?;
            observation.push(self.rows(na * ns, spec.observation_counts[p])?);
        }
        self.section("reward", None)?;
        let reward = self.rows(ns * na, n)?;
        if let Some((ln, _)) = self.lines.get(self.pos) {
            return self.err(*ln, "trailing content");
        }
        DiscreteOracleGame::new("file", spec, ns, initial, transition, observation, reward)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::games;
    use crate::seeding::rng_from;

    #[test]
    fn text_round_trip() {
        let g = games::tiny_game();
        let parsed = DiscreteOracleGame::parse(&g.to_text()).unwrap();
        assert_eq!(parsed.spec(), g.spec());
        assert_eq!(parsed.transition, g.transition);
        assert_eq!(parsed.observation, g.observation);
        assert_eq!(parsed.reward, g.reward);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "states 2\nactions 1\nobservations 1\nhorizon 0\ndiscount 1\ninitial\n0.5 0.2\n";
        match DiscreteOracleGame::parse(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 7),
            Err(Error::InvalidModel(_)) => {}
            other => panic!("unexpected {other:?}"),
        }
        let text = "states 2\nactions 1\nobservations 1\nhorizon 0\ndiscount 1\ninitial\n0.5 x\n";
        assert!(matches!(
            DiscreteOracleGame::parse(text),
            Err(Error::Parse { line: 7, .. })
        ));
    }

    #[test]
    fn rows_must_be_distributions() {
        let g = games::tiny_game();
        let text = g.to_text().replacen("0.8 0.2", "0.8 0.3", 1);
        assert!(matches!(
            DiscreteOracleGame::parse(&text),
            Err(Error::InvalidModel(_))
        ));
    }

    #[test]
    fn point_mass_initial_state() {
        let g = games::matching_pennies(0);
        let mut rng = rng_from(5);
        for _ in 0..100 {
            assert_eq!(g.sample_initial_state(&mut rng), 0);
        }
    }

    #[test]
    fn deterministic_transition_follows_table() {
        let g = games::fig1_game();
        let mut rng = rng_from(5);
        for s in 0..2 {
            let n = g.sample_next_state(&s, &JointAction::pair(1, 0), &mut rng);
            assert_eq!(n, s);
        }
    }

    #[test]
    fn observation_likelihood_products() {
        let uniform = games::uniform_observation_game();
        let a = JointAction::pair(0, 0);
        for o in 0..4 {
            let jo = uniform.spec().joint_observation_from_index(o);
            assert!((uniform.observation_likelihood(&a, &0, &jo) - 0.25).abs() < 1e-15);
        }
        let g = games::skewed_observation_game();
        let l = g.observation_likelihood(&a, &0, &JointObservation::new(&[0, 1]));
        assert!((l - 0.4).abs() < 1e-15);
    }

    #[test]
    fn observation_marginals_sum_to_one() {
        let mut rng = rng_from(9);
        for _ in 0..5 {
            let g = games::random_game(4, &[2, 3], &[3, 2], 1, &mut rng);
            for ja in 0..g.spec().num_joint_actions() {
                let a = g.spec().joint_action_from_index(ja);
                for s in 0..4 {
                    let total: f64 = (0..g.spec().num_joint_observations())
                        .map(|o| {
                            g.observation_likelihood(&a, &s, &g.spec().joint_observation_from_index(o))
                        })
                        .sum();
                    assert!((total - 1.0).abs() < 1e-9);
                }
            }
        }
    }
}
