//! Hierarchical relational event models.
//!
//! Collections of timestamped sender/recipient event sequences are modeled
//! with piecewise-constant log-linear hazards. Per-sequence coefficients are
//! pooled through a Normal population distribution and fitted by MCMC.

pub mod event_data;
pub mod likelihood;
pub mod rng;
pub mod simulate;
pub mod statistics;
pub mod inference;
pub mod diagnostics;
pub mod presets;
