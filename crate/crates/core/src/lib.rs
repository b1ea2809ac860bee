//! Allocation-only core for learning-guided reoptimization of the capacitated
//! vehicle routing problem (CVRP).
//!
//! The pipeline: perturb the demands of a solved instance, label which edges
//! of the old solution survive in the new one, learn that labeling from edge
//! features, then fix the predicted edges, contract fixed sequences and
//! re-solve the smaller problem.
//!
//! Everything here is `no_std` + `alloc`. File formats, timing and the CLI
//! live in the companion `reopt` crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod classifier;
pub mod edgefix;
pub mod features;
pub mod instance;
pub mod metrics;
pub mod rng;
pub mod solver;

pub use classifier::{Network, TrainConfig, TrainHistory};
pub use edgefix::{ContractedInstance, FixDiagnostics, FixedGraph, SolveConfig};
pub use features::{Dataset, EdgeKey, EdgeSample, N_FEATURES};
pub use instance::{
    DemandDistribution, Instance, IntervalClass, Modified, Point, Rounding, Scenario,
};
pub use metrics::{confusion_metrics, gap, Confusion};
pub use solver::{Forced, Route, Segment, Solution, Visit};
