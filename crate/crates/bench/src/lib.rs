//! Fixed inputs shared by the benchmarks, so every run measures the same work.

use glop_core::io::{generate, DatasetSpec};
use glop_core::neural::sample_stage1_shpp;
use glop_core::{ProblemKind, Rng, RoutingInstance, ShppTask};

pub fn instance(kind: ProblemKind, n: usize, seed: u64) -> RoutingInstance {
    generate(&DatasetSpec::new(kind, n, 1, seed)).expect("standard size").remove(0)
}

/// Random SHPPs of size `n` in the unit square.
pub fn shpp_tasks(n: usize, count: usize, seed: u64) -> Vec<ShppTask> {
    let rng = Rng::new(seed);
    (0..count).map(|i| sample_stage1_shpp(n, &mut rng.child(i as u64))).collect()
}
