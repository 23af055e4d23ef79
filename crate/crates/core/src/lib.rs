//! Reward schemes that pay nodes for propagating a transaction through a
//! forest of `d`-ary trees without creating fake identities.
//!
//! The crate is organised around the life cycle of a single transaction:
//!
//! - [`topology`]: the forest of `t` complete `d`-ary trees of height `H`.
//! - [`schemes`]: reward tables `r(i, h)` (almost-uniform, hybrid, geometric).
//! - [`game`]: strategies with cloning, levels, winning chains, exact
//!   expected utilities and a seeded Monte Carlo simulator.
//! - [`elimination`]: iterated elimination of weakly dominated strategies.
//! - [`sybil`]: profitability of fake-identity insertion.
//! - [`bounds`]: necessary conditions for dominant-strategy schemes, the
//!   closed-form payment lower bounds, and an exact LP minimisation oracle.
//! - [`custody`]: signed chain-of-custody envelopes and fee settlement.
//! - [`cli`]: the batch driver behind the `propinc` binary.
//!
//! All scheme algebra uses exact rationals ([`Rational`]); floating point
//! only appears in Monte Carlo accumulators and human-facing summaries.

pub mod bounds;
pub mod cli;
pub mod custody;
pub mod elimination;
mod error;
pub mod game;
pub mod rational;
pub mod schemes;
pub mod sybil;
pub mod topology;

pub use error::{Error, Result};
pub use rational::Rational;
