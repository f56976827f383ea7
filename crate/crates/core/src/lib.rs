//! Alignment of partially correlated random graphs.
//!
//! The crate bundles the planted-model samplers, the correlated functional
//! digraph, closed-form cumulants of the score, exact alignment estimators,
//! threshold calculators and a Monte Carlo experiment harness.

pub mod align;
pub mod cumulant;
pub mod digraph;
pub mod error;
pub mod harness;
pub mod model;
pub mod thresholds;

pub use align::{
    branch_and_bound_align, brute_force_align, distance, overlap, penalized_align,
    similarity_score, AlignmentResult, BranchAndBound, DEFAULT_BUDGET,
};
pub use cumulant::{ComponentShape, CumulantModel, CumulantQuery, ScoreFn, ScoreKind};
pub use digraph::{build_decomposition, ComponentKind, DigraphDecomposition, EdgeId};
pub use error::{Error, Result};
pub use model::{
    sample_instance, InjectiveMapping, ModelKind, ModelParams, PlantedInstance, WeightKind,
    WeightedGraph,
};
