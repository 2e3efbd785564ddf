use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use super::regret::Strategy;
use crate::cdit::InfoSetKey;
use crate::{Error, Result};

/// A single player's mapping from private histories to action distributions.
pub trait Policy {
    fn num_actions(&self) -> usize;

    fn distribution(&self, key: &InfoSetKey) -> Strategy;

    fn probability(&self, key: &InfoSetKey, action: usize) -> f64 {
        self.distribution(key)[action]
    }
}

/// Explicit behavior policy; unseen keys play uniformly.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorPolicy {
    player: usize,
    num_actions: usize,
    table: BTreeMap<InfoSetKey, Vec<f64>>,
}

impl BehaviorPolicy {
    pub fn uniform(player: usize, num_actions: usize) -> Self {
        Self {
            player,
            num_actions,
            table: BTreeMap::new(),
        }
    }

    pub fn player(&self) -> usize {
        self.player
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn insert(&mut self, key: InfoSetKey, probs: Vec<f64>) -> Result<()> {
        if key.player() != self.player {
            return Err(Error::InvalidArgument(format!(
                "key {key} does not belong to player {}",
                self.player
            )));
        }
        if probs.len() != self.num_actions {
            return Err(Error::InvalidArgument(format!(
                "expected {} probabilities at {key}, got {}",
                self.num_actions,
                probs.len()
            )));
        }
        let total: f64 = probs.iter().sum();
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("{key} is not a probability vector")));
        }
        self.table.insert(key, probs);
        Ok(())
    }

    pub fn get(&self, key: &InfoSetKey) -> Option<&[f64]> {
        self.table.get(key).map(Vec::as_slice)
    }

    /// Stored entries in key order.
    pub fn iter(&self) -> impl Iterator<Item = (&InfoSetKey, &[f64])> {
        self.table.iter().map(|(k, v)| (k, v.as_slice()))
    }
}

impl Policy for BehaviorPolicy {
    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn distribution(&self, key: &InfoSetKey) -> Strategy {
        match self.table.get(key) {
            Some(p) => p.iter().copied().collect(),
            None => (0..self.num_actions).map(|_| 1.0 / self.num_actions as f64).collect(),
        }
    }

    fn probability(&self, key: &InfoSetKey, action: usize) -> f64 {
        match self.table.get(key) {
            Some(p) => p[action],
            None => 1.0 / self.num_actions as f64,
        }
    }
}

/// Deterministic policy with a fixed default action for unlisted keys.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PurePolicy {
    pub player: usize,
    pub num_actions: usize,
    pub choices: HashMap<InfoSetKey, usize>,
    pub default_action: usize,
}

impl PurePolicy {
    pub fn action(&self, key: &InfoSetKey) -> usize {
        self.choices.get(key).copied().unwrap_or(self.default_action)
    }
}

impl Policy for PurePolicy {
    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn distribution(&self, key: &InfoSetKey) -> Strategy {
        let a = self.action(key);
        (0..self.num_actions).map(|b| if a == b { 1.0 } else { 0.0 }).collect()
    }

    fn probability(&self, key: &InfoSetKey, action: usize) -> f64 {
        if self.action(key) == action {
            1.0
        } else {
            0.0
        }
    }
}

/// Descriptive header of an exported policy file. `extra` lines are
/// written verbatim after the fixed fields.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolicyHeader {
    pub model: String,
    pub particles: usize,
    pub horizon: usize,
    pub iterations: u64,
    pub seed: u64,
    pub action_counts: Vec<usize>,
    pub extra: Vec<(String, String)>,
}

/// Line-oriented export: `#`-prefixed header, then one
/// `player<TAB>history<TAB>p0 p1 ...` record per stored information set.
pub fn export_policies(header: &PolicyHeader, policies: &[BehaviorPolicy]) -> String {
    let mut out = String::new();
    for (k, v) in &header.extra {
        let _ = writeln!(out, "# {k} {v}");
    }
    let _ = writeln!(out, "# model {}", header.model);
    let _ = writeln!(out, "# particles {}", header.particles);
    let _ = writeln!(out, "# horizon {}", header.horizon);
    let _ = writeln!(out, "# iterations {}", header.iterations);
    let _ = writeln!(out, "# seed {}", header.seed);
    let counts: Vec<String> = policies.iter().map(|p| p.num_actions.to_string()).collect();
    let _ = writeln!(out, "# actions {}", counts.join(" "));
    for p in policies {
        for (key, probs) in p.iter() {
            let probs: Vec<String> = probs.iter().map(|x| format!("{x}")).collect();
            let _ = writeln!(out, "{}\t{}\t{}", p.player, key.encode_history(), probs.join(" "));
        }
    }
    out
}

pub fn import_policies(text: &str) -> Result<(PolicyHeader, Vec<BehaviorPolicy>)> {
    let mut header = PolicyHeader::default();
    let mut policies: Vec<BehaviorPolicy> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let err = |message: String| Error::Parse { line: line_no, message };
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
            let num = |v: &str| v.parse::<u64>().map_err(|_| err(format!("bad {k} `{v}`")));
            match k {
                "model" => header.model = v.to_string(),
                "particles" => header.particles = num(v)? as usize,
                "horizon" => header.horizon = num(v)? as usize,
                "iterations" => header.iterations = num(v)?,
                "seed" => header.seed = num(v)?,
                "actions" => {
                    header.action_counts = v
                        .split_whitespace()
                        .map(|x| num(x).map(|n| n as usize))
                        .collect::<Result<_>>()?;
                    policies = header
                        .action_counts
                        .iter()
                        .enumerate()
                        .map(|(p, &n)| BehaviorPolicy::uniform(p, n))
                        .collect();
                }
                _ => header.extra.push((k.to_string(), v.to_string())),
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(err("expected player, history and probabilities".into()));
        }
        let player: usize = fields[0].parse().map_err(|_| err(format!("bad player `{}`", fields[0])))?;
        let policy = policies
            .get_mut(player)
            .ok_or_else(|| err(format!("player {player} not declared in the actions header")))?;
        let key = InfoSetKey::decode(player, fields[1]).map_err(|e| err(e.to_string()))?;
        let probs = fields[2]
            .split(' ')
            .map(|x| x.parse::<f64>().map_err(|_| err(format!("bad probability `{x}`"))))
            .collect::<Result<Vec<_>>>()?;
        policy.insert(key, probs).map_err(|e| err(e.to_string()))?;
    }
    if policies.is_empty() {
        return Err(Error::Parse {
            line: 0,
            message: "missing `# actions` header".into(),
        });
    }
    Ok((header, policies))
}
