//! Game-theoretic planning for zero-sum partially observable stochastic games
//! over large or continuous state spaces.
//!
//! A game is approximated by a particle *conditional distribution information set
//! tree* (CDIT): alternating joint-action / joint-observation layers whose nodes
//! carry weighted particle beliefs, grouped into per-player information sets by
//! private action-observation history. External-sampling CFR runs over the tree.
//!
//! Around the solver sit exact oracles for tiny finite games ([`analysis`],
//! [`cfr::vanilla`]), closed-form bound calculators ([`bounds`]) and a POMCP
//! best-responder for estimating exploitability ([`exploit`]).

pub mod analysis;
pub mod belief;
pub mod bounds;
pub mod cdit;
pub mod cfr;
mod error;
pub mod exploit;
pub mod model;
pub mod seeding;

pub use error::{Error, Result};
