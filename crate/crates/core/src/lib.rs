//! Nonparametric welfare analysis for discrete-choice random-utility
//! models.
//!
//! The crate computes exact distributions of individual welfare levels,
//! welfare differences (compensating and equivalent variation), their
//! joints, set-identified bounds, and social welfare, all from choice and
//! transition probabilities evaluated at counterfactual prices. A built-in
//! Monte Carlo simulator provides brute-force oracles for end-to-end
//! validation.

pub mod bounds;
pub mod error;
pub mod model;
pub mod oracle;
pub mod probability;
pub mod social;
pub mod welfare;

pub use error::{Error, Result};
