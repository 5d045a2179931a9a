//! Two-level design search: Bayesian optimisation over compositions around
//! a Pareto local search over placement and mapping.

pub mod gp;
pub mod inner;
pub mod outer;
pub mod pareto;

pub use gp::{expected_improvement, GpModel};
pub use inner::{inner_moo_solve, InnerConfig, InnerResult, InnerStrategy, Operator};
pub use outer::{
    best_edp, co_optimize, random_search, BestEdp, CoOptResult, CompositionSpace, OuterConfig,
    ScoredDesign, TraceRow,
};
pub use pareto::{dominates, Objectives, ParetoArchive};
