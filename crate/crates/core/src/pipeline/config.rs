//! Solver configurations and the named presets.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{GlopError, Result};
use crate::partition::{GnnConfig, PartitionMode, DEFAULT_VEHICLE_SLACK};
use crate::revision::{StageSpec, TspSolverConfig};
use crate::shpp::HELD_KARP_MAX;
use crate::types::ProblemKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub name: String,
    pub kind: ProblemKind,
    /// TSP solver, also used for every sub-TSP of a partition.
    pub tsp: TspSolverConfig,
    #[serde(default)]
    pub partition_mode: PartitionMode,
    /// Partitions decoded in sample mode; the best one is kept.
    #[serde(default = "one")]
    pub num_samples: usize,
    /// Partition model checkpoint. Without one, an untrained model built from
    /// `gnn` and `model_seed` is used.
    #[serde(default)]
    pub partition_model: Option<String>,
    #[serde(default)]
    pub gnn: Option<GnnConfig>,
    #[serde(default)]
    pub model_seed: u64,
    /// Neighbours per node in the partition graph; None picks by size.
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default = "default_slack")]
    pub slack: usize,
    /// Per-instance wall-clock budget for revisions.
    #[serde(default)]
    pub time_budget_s: Option<f64>,
}

fn one() -> usize {
    1
}

fn default_slack() -> usize {
    DEFAULT_VEHICLE_SLACK
}

/// Names accepted by [`SolveConfig::preset`].
pub const PRESETS: &[&str] = &[
    "tsp100-default",
    "tsp100-more",
    "tsp500-default",
    "tsp500-more",
    "tsp1k-default",
    "tsp1k-more",
    "tsp10k-default",
    "tsp10k-more",
    "tsp100k-default",
    "tsp100k-more",
    "cvrp1k-default",
    "cvrp2k-default",
    "cvrp5k-default",
    "cvrp7k-default",
    "pctsp-greedy",
    "pctsp-sample",
    "ri-only",
];

/// Stage list from `(size, iters)` pairs; sizes above the DP cap use 2-opt.
fn stages(pairs: &[(usize, usize)]) -> Vec<StageSpec> {
    pairs
        .iter()
        .filter(|p| p.1 > 0)
        .map(|&(size, iters)| StageSpec::new(size, iters, if size <= HELD_KARP_MAX { "dp" } else { "2opt" }))
        .collect()
}

impl SolveConfig {
    fn base(name: &str, kind: ProblemKind, w: usize, pairs: &[(usize, usize)]) -> Self {
        SolveConfig {
            name: name.to_string(),
            kind,
            tsp: TspSolverConfig { stages: stages(pairs), w, exact_max: HELD_KARP_MAX, options: Default::default() },
            partition_mode: PartitionMode::Greedy,
            num_samples: 1,
            partition_model: None,
            gnn: (kind != ProblemKind::Tsp).then(|| GnnConfig::toy(kind)),
            model_seed: 0,
            k: None,
            slack: DEFAULT_VEHICLE_SLACK,
            time_budget_s: None,
        }
    }

    /// Schedules shaped after the published inference settings. Revisers
    /// are classical (2-opt above the DP cap, DP below) until neural
    /// checkpoints are supplied with [`SolveConfig::with_reviser`].
    pub fn preset(name: &str) -> Result<Self> {
        use ProblemKind::*;
        let c = match name {
            "tsp100-default" => Self::base(name, Tsp, 35, &[(100, 20), (50, 10), (20, 10), (10, 5)]),
            "tsp100-more" => Self::base(name, Tsp, 140, &[(100, 20), (50, 10), (20, 10), (10, 5)]),
            "tsp500-default" | "tsp1k-default" => Self::base(name, Tsp, 1, &[(100, 20), (50, 25), (20, 5)]),
            "tsp500-more" | "tsp1k-more" => Self::base(name, Tsp, 10, &[(100, 20), (50, 25), (20, 5)]),
            "tsp10k-default" => Self::base(name, Tsp, 1, &[(100, 10), (50, 20), (20, 5)]),
            "tsp100k-default" => Self::base(name, Tsp, 1, &[(100, 5), (50, 5), (20, 5)]),
            "tsp10k-more" | "tsp100k-more" => Self::base(name, Tsp, 1, &[(100, 50), (50, 25), (20, 5)]),
            "cvrp1k-default" | "cvrp5k-default" | "cvrp7k-default" => Self::base(name, Cvrp, 1, &[(20, 5)]),
            "cvrp2k-default" => Self::base(name, Cvrp, 1, &[(50, 5), (20, 5)]),
            "pctsp-greedy" => Self::base(name, Pctsp, 1, &[(100, 10), (50, 10), (20, 5)]),
            "pctsp-sample" => {
                let mut c = Self::base(name, Pctsp, 1, &[(100, 10), (50, 10), (20, 5)]);
                c.partition_mode = PartitionMode::Sample;
                c.num_samples = 10;
                c
            }
            "ri-only" => Self::base(name, Tsp, 1, &[]),
            other => {
                return Err(GlopError::Config(format!(
                    "unknown preset {other:?}; known: {}",
                    PRESETS.join(", ")
                )))
            }
        };
        Ok(c)
    }

    /// Sets the reviser used at `size`.
    pub fn with_reviser(mut self, size: usize, reviser: &str) -> Result<Self> {
        let s = self
            .tsp
            .stages
            .iter_mut()
            .find(|s| s.size == size)
            .ok_or_else(|| GlopError::Config(format!("no stage of size {size} in {}", self.name)))?;
        s.reviser = reviser.to_string();
        Ok(self)
    }

    pub fn check(&self) -> Result<()> {
        if self.num_samples == 0 {
            return Err(GlopError::Config("num_samples must be positive".into()));
        }
        if self.kind != ProblemKind::Tsp && self.partition_model.is_none() && self.gnn.is_none() {
            return Err(GlopError::Config("a partition model or GNN config is required".into()));
        }
        if let Some(t) = self.time_budget_s {
            if !(t > 0.0) {
                return Err(GlopError::Config("time budget must be positive".into()));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the serialized configuration.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::revision::TspSolver;

    #[test]
    fn every_preset_builds() {
        for p in PRESETS {
            let c = SolveConfig::preset(p).unwrap();
            c.check().unwrap();
            TspSolver::new(c.tsp.clone()).unwrap();
        }
        assert!(matches!(SolveConfig::preset("nope"), Err(GlopError::Config(_))));
    }

    #[test]
    fn tsp500_matches_published_iterations() {
        let c = SolveConfig::preset("tsp500-default").unwrap();
        let got: Vec<(usize, usize)> = c.tsp.stages.iter().map(|s| (s.size, s.iters)).collect();
        assert_eq!(got, vec![(100, 20), (50, 25), (20, 5)]);
        assert_eq!(c.tsp.w, 1);
        let c = SolveConfig::preset("cvrp2k-default").unwrap();
        let got: Vec<(usize, usize)> = c.tsp.stages.iter().map(|s| (s.size, s.iters)).collect();
        assert_eq!(got, vec![(50, 5), (20, 5)]);
    }

    #[test]
    fn digest_tracks_content_and_survives_json() {
        let a = SolveConfig::preset("pctsp-sample").unwrap();
        let back: SolveConfig = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
        assert_eq!(a.digest(), back.digest());
        let b = a.clone().with_reviser(50, "identity").unwrap();
        assert_ne!(a.digest(), b.digest());
        let c = a.with_reviser(50, "dp").unwrap();
        assert!(TspSolver::new(c.tsp).is_err());
    }
}
