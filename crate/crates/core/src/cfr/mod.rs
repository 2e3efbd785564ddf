//! Regret matching, external-sampling CFR over particle trees, and exact
//! oracles for tiny games.

mod escfr;
mod normal_form;
mod policy;
mod regret;
pub mod vanilla;

use rand::Rng;

pub use escfr::{
    escfr_iteration, solve_escfr, EscfrSolver, Snapshot, SolveConfig, SolveReport, DEFAULT_SNAPSHOTS,
};
pub use normal_form::{normal_form_regret_matching, normal_form_regret_matching_traced, RegretStart};
pub use policy::{export_policies, import_policies, BehaviorPolicy, Policy, PolicyHeader, PurePolicy};
pub use regret::{regret_matching, regret_matching_into, InfoSetRecord, RegretTable, Strategy};
pub use vanilla::vanilla_cfr_exact;

/// Draws an index from a probability vector.
pub fn sample_action<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left `acc` just below 1: take the last positive entry.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}
