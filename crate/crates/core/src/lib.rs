//! Hierarchical routing solver: tours are improved by cutting them into
//! small Hamiltonian path problems solved by pluggable revisers, and
//! depot-based problems are first split into sub-tours by a learned
//! partition policy.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod checkpoint;
pub mod error;
pub mod insertion;
pub mod io;
pub mod neural;
pub mod optim;
pub mod partition;
pub mod pipeline;
pub mod revision;
pub mod rng;
pub mod shpp;
pub mod task;
pub mod types;

pub use error::{GlopError, Result};
pub use rng::Rng;
pub use task::{ShppTask, TransformRecord};
pub use types::{
    cycle_length, path_length, tour_length, validate_partition, validate_tour, DistanceMatrix,
    EdgeWeights, PathOrder, Partition, Point, ProblemKind, RoutingInstance, Tour, Violation,
};
pub use partition::{PartitionMode, PartitionModel};
pub use pipeline::{BenchReport, Glop, SolveConfig, SolveOutcome, Solution, StabilityReport};
pub use revision::{RevisionSchedule, StageSpec, TspSolver, TspSolverConfig};
pub use shpp::{reviser_by_name, Reviser};
