//! Objective of a partition once every subset is routed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GlopError, Result};
use crate::revision::TspSolver;
use crate::rng::Rng;
use crate::types::{cycle_length, validate_partition, Partition, ProblemKind, RoutingInstance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutedPartition {
    /// One closed route per subset, each starting and ending at the depot.
    pub routes: Vec<Vec<usize>>,
    pub length: f64,
    /// PCTSP penalties of unvisited nodes; zero for CVRP.
    pub penalty: f64,
    pub objective: f64,
}

/// Total length of closed routes given as depot-to-depot node lists.
pub fn routes_length(instance: &RoutingInstance, routes: &[Vec<usize>]) -> f64 {
    routes.iter().map(|r| r.windows(2).map(|w| instance.dist(w[0], w[1])).sum::<f64>()).sum()
}

/// Penalties of the nodes no route visits (PCTSP only).
pub fn unvisited_penalty(instance: &RoutingInstance, routes: &[Vec<usize>]) -> f64 {
    if instance.kind != ProblemKind::Pctsp {
        return 0.0;
    }
    let mut seen = vec![false; instance.len()];
    for r in routes {
        for &i in r {
            seen[i] = true;
        }
    }
    instance.customers().filter(|&i| !seen[i]).map(|i| instance.penalties[i]).sum()
}

/// Routes every subset as a sub-TSP through the depot; subset `r` uses the
/// stream `rng.child(r)`.
pub fn route_partition(
    instance: &RoutingInstance,
    partition: &Partition,
    solver: &TspSolver,
    rng: &Rng,
) -> Result<RoutedPartition> {
    validate_partition(instance, partition)?;
    let depot = instance.depot;
    let routes: Vec<Vec<usize>> = (0..partition.len())
        .into_par_iter()
        .map(|r| {
            let mut nodes = vec![depot];
            nodes.extend_from_slice(partition.members(r));
            let sub = instance.sub_tsp(&nodes);
            let tour = solver.solve(&sub, &rng.child(r as u64))?;
            let order = tour.order();
            let at = order.iter().position(|&i| i == 0).ok_or_else(|| {
                GlopError::Internal("sub-tour lost the depot".into())
            })?;
            let mut route: Vec<usize> = (0..order.len()).map(|k| nodes[order[(at + k) % order.len()]]).collect();
            route.push(depot);
            Ok(route)
        })
        .collect::<Result<_>>()?;
    let length = routes.iter().map(|r| cycle_length(instance, &r[..r.len() - 1])).sum();
    let penalty = unvisited_penalty(instance, &routes);
    Ok(RoutedPartition { routes, length, penalty, objective: length + penalty })
}

/// Objective of `partition`: summed sub-TSP lengths plus PCTSP penalties.
pub fn evaluate_partition(
    instance: &RoutingInstance,
    partition: &Partition,
    solver: &TspSolver,
    rng: &Rng,
) -> Result<f64> {
    Ok(route_partition(instance, partition, solver, rng)?.objective)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::revision::TspSolverConfig;
    use crate::types::Point;

    #[test]
    fn singletons_are_out_and_back() {
        let coords = vec![Point::new(0.5, 0.5), Point::new(0.1, 0.2), Point::new(0.9, 0.3), Point::new(0.4, 0.95)];
        let inst = RoutingInstance::cvrp(coords.clone(), vec![0.0, 3.0, 3.0, 3.0], 3.0).unwrap();
        let p = Partition { subsets: vec![vec![0, 2, 0], vec![0, 1, 0], vec![0, 3, 0]] };
        let solver = TspSolver::new(TspSolverConfig::default()).unwrap();
        let got = evaluate_partition(&inst, &p, &solver, &Rng::new(0)).unwrap();
        let want: f64 = (1..4).map(|i| 2.0 * coords[0].dist(&coords[i])).sum();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn pctsp_without_prize_is_refused() {
        let inst = RoutingInstance::pctsp(
            vec![Point::new(0.5, 0.5), Point::new(0.1, 0.2)],
            vec![0.0, 1.0],
            vec![0.0, 0.3],
            0.5,
        )
        .unwrap();
        let solver = TspSolver::new(TspSolverConfig::default()).unwrap();
        let empty = Partition { subsets: vec![vec![0, 0]] };
        assert!(evaluate_partition(&inst, &empty, &solver, &Rng::new(0)).is_err());
        let full = Partition { subsets: vec![vec![0, 1, 0]] };
        let r = route_partition(&inst, &full, &solver, &Rng::new(0)).unwrap();
        assert_eq!(r.penalty, 0.0);
        assert_eq!(r.routes, vec![vec![0, 1, 0]]);
    }

    #[test]
    fn large_subset_goes_through_revision() {
        let inst = crate::io::generate(&crate::io::DatasetSpec::new(ProblemKind::Pctsp, 100, 1, 2)).unwrap().remove(0);
        let all: Vec<usize> = std::iter::once(0).chain(inst.customers()).chain(std::iter::once(0)).collect();
        let p = Partition { subsets: vec![all] };
        let solver = TspSolver::new(TspSolverConfig::default()).unwrap();
        let r = route_partition(&inst, &p, &solver, &Rng::new(3)).unwrap();
        assert_eq!(r.routes[0].len(), 102);
        assert!((routes_length(&inst, &r.routes) - r.length).abs() < 1e-9);
        assert_eq!(r.routes[0][0], 0);
    }
}
