//! Independent reference implementations used as test oracles.
//!
//! Nothing here shares code with `aesp-core`. The policy oracle works on
//! plain JSON values and does its own calendar arithmetic, so agreement with
//! the engine is evidence rather than tautology.

pub mod canonical;
pub mod policy;
pub mod stats;
