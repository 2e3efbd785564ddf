use std::collections::HashMap;

use smallvec::SmallVec;

use super::policy::BehaviorPolicy;
use crate::cdit::InfoSetKey;

pub type Strategy = SmallVec<[f64; 8]>;

/// `R⁺(a) / ΣR⁺` when some regret is positive, uniform otherwise.
pub fn regret_matching(regrets: &[f64]) -> Strategy {
    let mut out = Strategy::new();
    regret_matching_into(regrets, &mut out);
    out
}

pub fn regret_matching_into(regrets: &[f64], out: &mut Strategy) {
    out.clear();
    let max = regrets.iter().fold(0.0f64, |m, &r| if r > m { r } else { m });
    if max == f64::INFINITY {
        let n = regrets.iter().filter(|r| **r == f64::INFINITY).count() as f64;
        out.extend(regrets.iter().map(|&r| if r == f64::INFINITY { 1.0 / n } else { 0.0 }));
    } else if max > 0.0 {
        let total: f64 = regrets.iter().map(|&r| positive(r)).sum();
        if total.is_finite() {
            out.extend(regrets.iter().map(|&r| positive(r) / total));
            return;
        }
        // Rescale so huge regrets cannot overflow the sum.
        let total: f64 = regrets.iter().map(|&r| positive(r) / max).sum();
        out.extend(regrets.iter().map(|&r| positive(r) / max / total));
    } else {
        let n = regrets.len() as f64;
        out.extend(regrets.iter().map(|_| 1.0 / n));
    }
}

fn positive(r: f64) -> f64 {
    if r > 0.0 {
        r
    } else {
        0.0
    }
}

/// Cumulative regrets and average-strategy weights of one information set.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoSetRecord {
    pub cumulative_regret: Vec<f64>,
    pub cumulative_strategy: Vec<f64>,
    pub visit_count: u64,
}

impl InfoSetRecord {
    pub fn current_strategy(&self) -> Strategy {
        regret_matching(&self.cumulative_regret)
    }

    pub fn average_strategy(&self) -> Vec<f64> {
        normalize_or_uniform(&self.cumulative_strategy)
    }
}

pub(crate) fn normalize_or_uniform(weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    if total > 0.0 && total.is_finite() {
        weights.iter().map(|w| w / total).collect()
    } else {
        vec![1.0 / weights.len() as f64; weights.len()]
    }
}

/// One player's records, stored contiguously: record `r` owns the slice
/// `r*n..(r+1)*n` of both arrays.
#[derive(Debug, Clone)]
pub struct RegretTable {
    player: usize,
    num_actions: usize,
    index: HashMap<InfoSetKey, u32>,
    regrets: Vec<f64>,
    strategy: Vec<f64>,
    visits: Vec<u64>,
}

impl RegretTable {
    pub fn new(player: usize, num_actions: usize) -> Self {
        assert!(num_actions >= 1);
        Self {
            player,
            num_actions,
            index: HashMap::new(),
            regrets: Vec::new(),
            strategy: Vec::new(),
            visits: Vec::new(),
        }
    }

    pub fn player(&self) -> usize {
        self.player
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    fn slot(&mut self, key: &InfoSetKey) -> usize {
        if let Some(&i) = self.index.get(key) {
            return i as usize;
        }
        let i = self.index.len();
        self.index.insert(key.clone(), i as u32);
        self.regrets.resize(self.regrets.len() + self.num_actions, 0.0);
        self.strategy.resize(self.strategy.len() + self.num_actions, 0.0);
        self.visits.push(0);
        i
    }

    fn range(&self, slot: usize) -> std::ops::Range<usize> {
        slot * self.num_actions..(slot + 1) * self.num_actions
    }

    /// Regret-matching strategy; uniform for unseen keys.
    pub fn current_strategy(&self, key: &InfoSetKey) -> Strategy {
        let mut out = Strategy::new();
        self.current_strategy_into(key, &mut out);
        out
    }

    pub fn current_strategy_into(&self, key: &InfoSetKey, out: &mut Strategy) {
        match self.index.get(key) {
            Some(&i) => regret_matching_into(&self.regrets[self.range(i as usize)], out),
            None => {
                out.clear();
                out.extend((0..self.num_actions).map(|_| 1.0 / self.num_actions as f64));
            }
        }
    }

    pub fn add_regrets(&mut self, key: &InfoSetKey, delta: &[f64]) {
        let slot = self.slot(key);
        let r = self.range(slot);
        for (x, d) in self.regrets[r].iter_mut().zip(delta) {
            *x += d;
        }
    }

    /// Adds `weight * strategy` to the average-strategy accumulator and
    /// counts a visit.
    pub fn add_strategy(&mut self, key: &InfoSetKey, strategy: &[f64], weight: f64) {
        let slot = self.slot(key);
        let r = self.range(slot);
        for (x, s) in self.strategy[r].iter_mut().zip(strategy) {
            *x += weight * s;
        }
        self.visits[slot] += 1;
    }

    pub fn record(&self, key: &InfoSetKey) -> Option<InfoSetRecord> {
        let &i = self.index.get(key)?;
        let r = self.range(i as usize);
        Some(InfoSetRecord {
            cumulative_regret: self.regrets[r.clone()].to_vec(),
            cumulative_strategy: self.strategy[r].to_vec(),
            visit_count: self.visits[i as usize],
        })
    }

    pub fn keys(&self) -> impl Iterator<Item = &InfoSetKey> {
        self.index.keys()
    }

    /// Normalized cumulative strategies. Keys that never accumulated
    /// strategy weight are omitted and so fall back to uniform.
    pub fn average_policy(&self) -> BehaviorPolicy {
        let mut policy = BehaviorPolicy::uniform(self.player, self.num_actions);
        for (key, &i) in &self.index {
            let w = &self.strategy[self.range(i as usize)];
            if w.iter().sum::<f64>() > 0.0 {
                policy
                    .insert(key.clone(), normalize_or_uniform(w))
                    .expect("normalized strategy is a distribution");
            }
        }
        policy
    }

    /// Largest average positive regret `max_I max_a R⁺(I,a) / t`.
    pub fn max_average_regret(&self, iterations: u64) -> f64 {
        let m = self.regrets.iter().fold(0.0f64, |m, &r| m.max(r));
        m / iterations.max(1) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfr::Policy;

    #[test]
    fn regret_matching_examples() {
        assert_eq!(regret_matching(&[3.0, 1.0, 0.0]).as_slice(), &[0.75, 0.25, 0.0]);
        assert_eq!(regret_matching(&[-1.0, -2.0]).as_slice(), &[0.5, 0.5]);
        assert_eq!(regret_matching(&[0.0, 0.0, 5.0]).as_slice(), &[0.0, 0.0, 1.0]);
        assert_eq!(regret_matching(&[f64::MAX, f64::MAX]).as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn table_defaults_to_uniform() {
        let t = RegretTable::new(0, 4);
        let s = t.current_strategy(&InfoSetKey::root(0));
        assert_eq!(s.as_slice(), &[0.25; 4]);
        assert!(t.average_policy().is_empty());
    }

    #[test]
    fn accumulation() {
        let mut t = RegretTable::new(1, 2);
        let k = InfoSetKey::root(1).child(0, 1);
        t.add_regrets(&k, &[1.0, -3.0]);
        t.add_regrets(&k, &[1.0, 5.0]);
        assert_eq!(t.current_strategy(&k).as_slice(), &[2.0 / 4.0, 2.0 / 4.0]);
        t.add_strategy(&k, &[0.25, 0.75], 1.0);
        t.add_strategy(&k, &[0.75, 0.25], 1.0);
        let rec = t.record(&k).unwrap();
        assert_eq!(rec.visit_count, 2);
        assert_eq!(rec.average_strategy(), vec![0.5, 0.5]);
        assert_eq!(rec.cumulative_regret, vec![2.0, 2.0]);
        assert_eq!(t.average_policy().distribution(&k).as_slice(), &[0.5, 0.5]);
        assert_eq!(t.max_average_regret(2), 1.0);
    }
}
