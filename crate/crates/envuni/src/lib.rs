//! envuni — a desk-scale simulator for measurement records in a closed
//! quantum universe.
//!
//! The crate builds correlated system/apparatus/environment states on
//! finite tensor-product spaces, decomposes them into orthogonal branches,
//! decides envariance symmetries (phase and swap), derives Born
//! probabilities from exact rational branch weights by fine-graining, and
//! checks that repeated-experiment statistics concentrate on the Born
//! frequencies.
//!
//! Everything is dense, double precision, and immutable after
//! construction; all operations are pure functions and safe to share
//! across threads.

pub mod born;
pub mod cli;
pub mod envariance;
pub mod experiments;
pub mod hilbert;
pub mod histories;
pub mod measurement;
pub mod scenario;
pub mod universe;

pub use hilbert::{CompositeSpace, FactorSpace, StateVector, Tolerances};
pub use universe::SystemSpec;

#[cfg(test)]
pub(crate) mod testutil;
