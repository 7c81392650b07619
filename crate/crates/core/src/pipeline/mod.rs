//! End-to-end solving, benchmarking and stability runs.

pub mod config;
pub mod report;

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{SolveConfig, PRESETS};
pub use report::{bench, quartiles, stability, BenchReport, BenchRow, Quartiles, StabilityReport};

use crate::error::{GlopError, Result};
use crate::io::default_k;
use crate::partition::{
    build_sparse_graph, load_model, route_partition, routes_length, sample_partitions, unvisited_penalty,
    PartitionMode, PartitionModel, RoutedPartition,
};
use crate::revision::TspSolver;
use crate::rng::Rng;
use crate::types::{tour_length, validate_partition, Partition, ProblemKind, RoutingInstance, Tour};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solution {
    Tour(Tour),
    /// Closed routes, each starting and ending at the depot.
    Routes(Vec<Vec<usize>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub solution: Solution,
    pub objective: f64,
    pub time_s: f64,
    /// Partitions decoded and routed (0 for TSP).
    pub partitions: usize,
}

/// A [`SolveConfig`] with its revisers and partition model loaded.
#[derive(Debug, Clone)]
pub struct Glop {
    pub config: SolveConfig,
    pub tsp: TspSolver,
    pub model: Option<PartitionModel>,
}

impl Glop {
    pub fn new(config: SolveConfig) -> Result<Self> {
        config.check()?;
        let tsp = TspSolver::new(config.tsp.clone())?;
        let model = match (config.kind, &config.partition_model, &config.gnn) {
            (ProblemKind::Tsp, _, _) => None,
            (_, Some(path), _) => Some(load_model(path)?),
            (_, None, Some(g)) => Some(PartitionModel::init(g.clone(), &mut Rng::new(config.model_seed))?),
            (_, None, None) => unreachable!("rejected by check"),
        };
        if let Some(m) = &model {
            if m.cfg.kind != config.kind {
                return Err(GlopError::Config(format!(
                    "partition model is for {}, config is for {}",
                    m.cfg.kind, config.kind
                )));
            }
        }
        Ok(Glop { config, tsp, model })
    }

    /// Replaces the partition model, e.g. with one trained in memory.
    pub fn with_model(mut self, model: PartitionModel) -> Result<Self> {
        if model.cfg.kind != self.config.kind {
            return Err(GlopError::Config("partition model kind does not match".into()));
        }
        self.model = Some(model);
        Ok(self)
    }

    fn solver_for_call(&self, start: Instant) -> TspSolver {
        let mut tsp = self.tsp.clone();
        if let Some(b) = self.config.time_budget_s {
            tsp.config.options.deadline = Some(start + Duration::from_secs_f64(b));
        }
        tsp
    }

    /// Solves one instance. Randomness comes only from `rng`; every emitted
    /// solution is validated and its objective recomputed.
    pub fn solve(&self, instance: &RoutingInstance, rng: &Rng) -> Result<SolveOutcome> {
        if instance.kind != self.config.kind {
            return Err(GlopError::Config(format!(
                "config {} is for {}, instance is {}",
                self.config.name, self.config.kind, instance.kind
            )));
        }
        let start = Instant::now();
        let tsp = self.solver_for_call(start);
        match instance.kind {
            ProblemKind::Tsp => {
                let tour = tsp.solve(instance, rng)?;
                let objective = tour_length(instance, &tour)?;
                Ok(SolveOutcome {
                    solution: Solution::Tour(tour),
                    objective,
                    time_s: start.elapsed().as_secs_f64(),
                    partitions: 0,
                })
            }
            _ => {
                let model = self.model.as_ref().expect("built for partition problems");
                let k = self.config.k.unwrap_or_else(|| default_k(instance.kind, instance.len() - 1));
                let hm = model.heatmap(&build_sparse_graph(instance, k)?)?;
                let count = match self.config.partition_mode {
                    PartitionMode::Greedy => 1,
                    PartitionMode::Sample => self.config.num_samples,
                };
                let samples = sample_partitions(
                    &hm,
                    instance,
                    self.config.partition_mode,
                    count,
                    &rng.child(0),
                    self.config.slack,
                    false,
                )?;
                let route_rng = rng.child(1);
                let routed: Vec<RoutedPartition> = samples
                    .par_iter()
                    .enumerate()
                    .map(|(m, s)| route_partition(instance, &s.partition, &tsp, &route_rng.child(m as u64)))
                    .collect::<Result<_>>()?;
                let mut best: Option<RoutedPartition> = None;
                for r in routed {
                    if best.as_ref().is_none_or(|b| r.objective < b.objective) {
                        best = Some(r);
                    }
                }
                let best = best.expect("at least one sample");
                let objective = check_routes(instance, &best.routes)?;
                if (objective - best.objective).abs() > 1e-9 * objective.max(1.0) {
                    return Err(GlopError::Internal(format!(
                        "objective {} disagrees with recomputation {objective}",
                        best.objective
                    )));
                }
                Ok(SolveOutcome {
                    solution: Solution::Routes(best.routes),
                    objective,
                    time_s: start.elapsed().as_secs_f64(),
                    partitions: samples.len(),
                })
            }
        }
    }
}

/// Validates depot-to-depot routes and returns length plus penalties.
pub fn check_routes(instance: &RoutingInstance, routes: &[Vec<usize>]) -> Result<f64> {
    validate_partition(instance, &Partition { subsets: routes.to_vec() })?;
    Ok(routes_length(instance, routes) + unvisited_penalty(instance, routes))
}

/// Objective of an emitted solution, recomputed from scratch after validation.
pub fn solution_objective(instance: &RoutingInstance, solution: &Solution) -> Result<f64> {
    match solution {
        Solution::Tour(t) => tour_length(instance, t),
        Solution::Routes(r) => check_routes(instance, r),
    }
}

/// Builds the global thread pool from `GLOP_THREADS` when it is set.
pub fn init_threads_from_env() -> Result<Option<usize>> {
    let Ok(v) = std::env::var("GLOP_THREADS") else { return Ok(None) };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| GlopError::Config(format!("GLOP_THREADS must be a positive integer, got {v:?}")))?;
    if n == 0 {
        return Err(GlopError::Config("GLOP_THREADS must be positive".into()));
    }
    // A pool may already exist (e.g. in tests); the first one wins.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(Some(n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{generate, DatasetSpec};
    use crate::types::Point;

    #[test]
    fn four_node_tsp_is_optimal() {
        let coords = vec![Point::new(0.0, 0.0), Point::new(1.0, 1.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)];
        let inst = RoutingInstance::tsp(coords).unwrap();
        let g = Glop::new(SolveConfig::preset("tsp500-default").unwrap()).unwrap();
        let out = g.solve(&inst, &Rng::new(0)).unwrap();
        assert!((out.objective - 4.0).abs() < 1e-12);
    }

    #[test]
    fn full_demands_give_one_route_each() {
        let coords = vec![Point::new(0.5, 0.5), Point::new(0.1, 0.2), Point::new(0.9, 0.3), Point::new(0.4, 0.95)];
        let inst = RoutingInstance::cvrp(coords.clone(), vec![0.0, 9.0, 9.0, 9.0], 9.0).unwrap();
        let mut cfg = SolveConfig::preset("cvrp1k-default").unwrap();
        cfg.k = Some(3);
        let out = Glop::new(cfg).unwrap().solve(&inst, &Rng::new(0)).unwrap();
        let want: f64 = (1..4).map(|i| 2.0 * coords[0].dist(&coords[i])).sum();
        assert!((out.objective - want).abs() < 1e-12);
        let Solution::Routes(r) = &out.solution else { panic!() };
        assert_eq!(r.len(), 3);
    }

    #[test]
    fn pctsp_solutions_validate_and_recompute() {
        let insts = generate(&DatasetSpec::new(ProblemKind::Pctsp, 50, 3, 4)).unwrap();
        for preset in ["pctsp-greedy", "pctsp-sample"] {
            let g = Glop::new(SolveConfig::preset(preset).unwrap()).unwrap();
            for inst in &insts {
                let out = g.solve(inst, &Rng::new(1)).unwrap();
                let again = solution_objective(inst, &out.solution).unwrap();
                assert!((again - out.objective).abs() < 1e-9);
                assert_eq!(g.solve(inst, &Rng::new(1)).unwrap().solution, out.solution);
            }
        }
    }

    #[test]
    fn wrong_kind_is_a_config_error() {
        let inst = generate(&DatasetSpec::new(ProblemKind::Tsp, 10, 1, 4)).unwrap().remove(0);
        let g = Glop::new(SolveConfig::preset("pctsp-greedy").unwrap()).unwrap();
        assert_eq!(g.solve(&inst, &Rng::new(0)).unwrap_err().exit_code(), 3);
    }
}
