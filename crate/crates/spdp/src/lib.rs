//! Differential topic modelling over grouped document collections with a
//! shadow Poisson-Dirichlet process: topics are shared across groups, each
//! group's word distribution is a Pitman-Yor draw whose base measure is a
//! group-specific sparse transform of a shared base distribution.
//!
//! The crate provides:
//! - an exact sequential blocked Gibbs sampler that jointly resamples each
//!   word's (topic, table indicator, table dish) from the collapsed
//!   conditional, with generalized Stirling numbers cached in log space;
//! - an approximate parallel sampler that reorders words, partitions
//!   documents over logical devices, runs per-word workgroups against shared
//!   atomic counts in waves, and validates/corrects the non-derivable counts
//!   at every barrier (CPU worker pools standing in for accelerator kernels);
//! - held-out perplexity with fold-in, Hellinger-distance topic alignment,
//!   and ranked topic tables;
//! - text snapshots that serialize only the canonical state (assignments,
//!   indicators, dish lists) and regenerate all counts on load.
//!
//! Start with the runnable programs under `examples/`; the thin `spdp`
//! binary drives batch runs from a flat key=value config.

// `!(x > 0.0)` in validations deliberately rejects NaN alongside
// non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// sampler entry points carry the model's full parameter set
#![allow(clippy::too_many_arguments)]
// indexed loops walk several parallel per-topic arrays at once
#![allow(clippy::needless_range_loop)]

pub mod cli;
pub mod config;
pub mod corpus;
mod error;
pub mod eval;
pub mod model;
pub mod numerics;
pub mod parallel;
pub mod synth;

pub use error::{Error, Result};
