//! Design-space exploration for 2.5D multi-chiplet PIM accelerators.
//!
//! The crate evaluates candidate chiplet systems on silicon and glass
//! interposers (latency, energy, fabrication cost, warpage, peak
//! temperature) and searches over chiplet composition, placement and
//! layer-to-chiplet mapping with a two-level optimizer: Bayesian
//! optimization over compositions wrapping a Pareto local search over
//! placements and mappings.

pub mod catalog;
pub mod design;
pub mod error;
pub mod mapper;
pub mod optimizer;
pub mod package;
pub mod perf;
pub mod report;
pub mod run;
pub mod scenario;
pub mod thermal;
pub mod topology;
pub mod workload;

pub use error::{DseError, Result};

/// Bumped whenever output formats change.
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");
