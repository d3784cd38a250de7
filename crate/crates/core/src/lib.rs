//! Error-free multi-valued Byzantine consensus, with a deterministic
//! synchronous simulator and exact communication accounting.
//!
//! n processors, up to t < n/3 of them Byzantine, agree on an L-bit value
//! with zero probability of error and no cryptography. The value is agreed
//! in D-bit generations: a Reed-Solomon code spreads each generation's slice
//! across the processors so that one symbol per processor suffices, a
//! single-bit Byzantine broadcast primitive keeps all control information
//! identical everywhere, and a trust graph accumulates fault diagnoses
//! across generations until misbehaving processors are isolated. Faulty
//! processors get at most t(t+1) chances to disturb a run, so for long
//! values almost every generation runs at the cheap fault-free cost.
//!
//! The crate is organized along those lines: [`field`] and [`rs`] implement
//! the coding layer, [`bsb`] the broadcast primitive, [`graph`] the trust
//! graph, [`engine`] the per-generation protocol, [`scenario`], [`adversary`]
//! and [`sim`] the simulation harness, and [`metrics`] the cost accounting.

pub mod adversary;
pub mod bits;
pub mod bsb;
pub mod engine;
pub mod field;
pub mod graph;
pub mod metrics;
pub mod rs;
pub mod scenario;
pub mod sim;
pub mod transcript;

pub use bits::Bits;
pub use engine::{choose_parameters, ConsensusConfig, ConsensusOutput, RunOutcome, SimError};
pub use scenario::{InputSpec, Scenario, Strategy};
pub use sim::{run_scenario, run_scenario_with};
pub use transcript::Transcript;
