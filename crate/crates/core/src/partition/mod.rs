//! Global partition policy for CVRP and PCTSP: sparse input graphs, a GNN
//! heatmap, masked sequential decoding and REINFORCE training against the
//! sub-TSP solver.

pub mod evaluate;
pub mod gnn;
pub mod graph;
pub mod sampler;
pub mod train;

use std::path::Path;

pub use evaluate::{evaluate_partition, route_partition, routes_length, unvisited_penalty, RoutedPartition};
pub use gnn::{GnnConfig, PartitionHeatmap, PartitionModel, HEAT_FLOOR};
pub use graph::{build_sparse_graph, SparseGraph};
pub use sampler::{
    action_probabilities, feasible_actions, partition_actions, sample_partition, sample_partitions,
    trajectory_log_prob, PartitionMode, PartitionSample, PartitionState, DEFAULT_VEHICLE_SLACK,
};
pub use train::{instance_gradient, train_global, GlobalStepStats, GlobalTrainConfig, GlobalTrainReport};

use crate::checkpoint::Checkpoint;
use crate::error::Result;

pub const CHECKPOINT_KIND: &str = "partition";

pub fn save_model(model: &PartitionModel, path: impl AsRef<Path>) -> Result<()> {
    Checkpoint::new(CHECKPOINT_KIND, &model.cfg, &model.params)?.save(path)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<PartitionModel> {
    let ck = Checkpoint::load(path)?;
    ck.expect_kind(CHECKPOINT_KIND)?;
    PartitionModel::from_params(ck.config()?, ck.params())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::types::ProblemKind;

    #[test]
    fn model_checkpoint_round_trip() {
        let m = PartitionModel::init(GnnConfig::toy(ProblemKind::Pctsp), &mut Rng::new(2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        save_model(&m, &p).unwrap();
        let back = load_model(&p).unwrap();
        assert_eq!(back.params, m.params);
        assert_eq!(back.cfg, m.cfg);
        assert!(crate::neural::load_policy(&p).is_err());
    }
}
