//! Constraint-masked sequential partition decoding from a heatmap.
//!
//! Starting at the depot, the next node is chosen among the feasible actions
//! with probability proportional to the heatmap entry from the current node.
//! Choosing the depot closes the current subset; for PCTSP it ends decoding.

use rand::Rng as _;

use crate::error::{GlopError, Result};
use crate::partition::gnn::{PartitionHeatmap, HEAT_FLOOR};
use crate::rng::Rng;
use crate::types::{Partition, ProblemKind, RoutingInstance};

/// Extra vehicles allowed above the demand lower bound.
pub const DEFAULT_VEHICLE_SLACK: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionMode {
    #[default]
    Greedy,
    Sample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionState {
    pub kind: ProblemKind,
    pub depot: usize,
    pub current: usize,
    pub visited: Vec<bool>,
    pub n_unvisited: usize,
    /// Load of the open subset.
    pub load: f64,
    pub unvisited_demand: f64,
    pub collected_prize: f64,
    /// Closed subsets, each starting and ending at the depot.
    pub subsets: Vec<Vec<usize>>,
    /// Open subset, starting at the depot.
    pub open: Vec<usize>,
    /// Soft bound on the number of CVRP subsets.
    pub max_vehicles: usize,
    pub done: bool,
}

fn vehicles_needed(demand: f64, capacity: f64) -> usize {
    if demand <= 0.0 {
        0
    } else {
        (demand / capacity - 1e-9).ceil().max(1.0) as usize
    }
}

impl PartitionState {
    pub fn new(instance: &RoutingInstance, slack: usize) -> Self {
        let n = instance.len();
        let depot = instance.depot;
        let mut visited = vec![false; n];
        visited[depot] = true;
        let unvisited_demand = match instance.kind {
            ProblemKind::Cvrp => instance.customers().map(|i| instance.demands[i]).sum(),
            _ => 0.0,
        };
        let max_vehicles = match instance.kind {
            ProblemKind::Cvrp => vehicles_needed(unvisited_demand, instance.capacity) + slack,
            _ => 1,
        };
        PartitionState {
            kind: instance.kind,
            depot,
            current: depot,
            visited,
            n_unvisited: n - 1,
            load: 0.0,
            unvisited_demand,
            collected_prize: 0.0,
            subsets: Vec::new(),
            open: vec![depot],
            max_vehicles,
            done: false,
        }
    }

    pub fn remaining_capacity(&self, instance: &RoutingInstance) -> f64 {
        instance.capacity - self.load
    }

    /// Applies action `a`, which must be feasible.
    pub fn apply(&mut self, instance: &RoutingInstance, a: usize) {
        if a == self.depot {
            let mut s = std::mem::replace(&mut self.open, vec![self.depot]);
            s.push(self.depot);
            self.subsets.push(s);
            self.load = 0.0;
            self.current = self.depot;
            if self.kind == ProblemKind::Pctsp || self.n_unvisited == 0 {
                self.done = true;
            }
            return;
        }
        debug_assert!(!self.visited[a]);
        self.visited[a] = true;
        self.n_unvisited -= 1;
        match self.kind {
            ProblemKind::Cvrp => {
                self.load += instance.demands[a];
                self.unvisited_demand -= instance.demands[a];
            }
            _ => self.collected_prize += instance.prizes[a],
        }
        self.open.push(a);
        self.current = a;
    }

    pub fn into_partition(self) -> Partition {
        Partition { subsets: self.subsets }
    }
}

/// Feasible next nodes in ascending order. Empty once decoding is done.
pub fn feasible_actions(state: &PartitionState, instance: &RoutingInstance) -> Result<Vec<usize>> {
    if state.done {
        return Ok(Vec::new());
    }
    let depot = state.depot;
    let mut out = Vec::new();
    let mut depot_ok = false;
    match state.kind {
        ProblemKind::Cvrp => {
            let mut any_customer = false;
            for j in 0..state.visited.len() {
                if !state.visited[j] && state.load + instance.demands[j] <= instance.capacity {
                    out.push(j);
                    any_customer = true;
                }
            }
            if state.current != depot {
                let left = state.max_vehicles.saturating_sub(state.subsets.len() + 1);
                depot_ok = state.n_unvisited == 0
                    || !any_customer
                    || left >= vehicles_needed(state.unvisited_demand, instance.capacity);
            }
        }
        ProblemKind::Pctsp => {
            out.extend((0..state.visited.len()).filter(|&j| !state.visited[j]));
            depot_ok = state.collected_prize >= instance.prize_min;
        }
        ProblemKind::Tsp => return Err(GlopError::Config("TSP has no partition".into())),
    }
    if depot_ok {
        let at = out.partition_point(|&j| j < depot);
        out.insert(at, depot);
    }
    if out.is_empty() {
        return Err(GlopError::Infeasible(format!(
            "no feasible action with {} nodes left",
            state.n_unvisited
        )));
    }
    Ok(out)
}

/// Unnormalised weights of the feasible actions, with the heatmap edge that
/// carries each weight (None for floor entries). `edge_of` is scratch of
/// length `n` filled with `usize::MAX` and is restored before returning.
fn weights(
    hm: &PartitionHeatmap,
    state: &PartitionState,
    actions: &[usize],
    edge_of: &mut [usize],
) -> Vec<(f64, Option<usize>)> {
    let edges = hm.out_edges(state.current);
    for e in edges.clone() {
        edge_of[hm.dst[e]] = e;
    }
    let w = actions
        .iter()
        .map(|&j| match edge_of[j] {
            usize::MAX => (HEAT_FLOOR, None),
            e => (hm.h[e], Some(e)),
        })
        .collect();
    for e in edges {
        edge_of[hm.dst[e]] = usize::MAX;
    }
    w
}

/// Probability of each feasible action from `state`.
pub fn action_probabilities(
    hm: &PartitionHeatmap,
    state: &PartitionState,
    instance: &RoutingInstance,
) -> Result<Vec<(usize, f64)>> {
    let actions = feasible_actions(state, instance)?;
    let mut scratch = vec![usize::MAX; hm.n];
    let w = weights(hm, state, &actions, &mut scratch);
    let z: f64 = w.iter().map(|x| x.0).sum();
    Ok(actions.into_iter().zip(w).map(|(a, (x, _))| (a, x / z)).collect())
}

#[derive(Debug, Clone)]
pub struct PartitionSample {
    pub partition: Partition,
    /// Chosen nodes in order, depot visits included.
    pub actions: Vec<usize>,
    pub logp: f64,
    /// Gradient of `logp` with respect to each heatmap edge score, when tracked.
    pub score_grad: Option<Vec<f64>>,
}

/// Decodes one partition. `rng` is only drawn from in sample mode.
pub fn sample_partition(
    hm: &PartitionHeatmap,
    instance: &RoutingInstance,
    mode: PartitionMode,
    rng: &mut Rng,
    slack: usize,
    track_grad: bool,
) -> Result<PartitionSample> {
    if hm.n != instance.len() {
        return Err(GlopError::Input("heatmap and instance sizes differ".into()));
    }
    let mut state = PartitionState::new(instance, slack);
    let mut scratch = vec![usize::MAX; hm.n];
    let mut grad = track_grad.then(|| vec![0.0; hm.src.len()]);
    let mut actions = Vec::with_capacity(instance.len() + 4);
    let mut logp = 0.0;
    while !state.done {
        let feas = feasible_actions(&state, instance)?;
        let w = weights(hm, &state, &feas, &mut scratch);
        let z: f64 = w.iter().map(|x| x.0).sum();
        let k = match mode {
            PartitionMode::Greedy => {
                let mut best = 0;
                for (i, x) in w.iter().enumerate() {
                    if x.0 > w[best].0 {
                        best = i;
                    }
                }
                best
            }
            PartitionMode::Sample => {
                let u = rng.random::<f64>() * z;
                let mut acc = 0.0;
                let mut pick = w.len() - 1;
                for (i, x) in w.iter().enumerate() {
                    acc += x.0;
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                pick
            }
        };
        logp += w[k].0.ln() - z.ln();
        if let Some(g) = grad.as_mut() {
            for &(x, e) in &w {
                if let Some(e) = e {
                    g[e] -= x / z;
                }
            }
            if let Some(e) = w[k].1 {
                g[e] += 1.0;
            }
        }
        actions.push(feas[k]);
        state.apply(instance, feas[k]);
    }
    Ok(PartitionSample { partition: state.into_partition(), actions, logp, score_grad: grad })
}

/// `count` decodes with per-sample streams `rng.child(m)`.
pub fn sample_partitions(
    hm: &PartitionHeatmap,
    instance: &RoutingInstance,
    mode: PartitionMode,
    count: usize,
    rng: &Rng,
    slack: usize,
    track_grad: bool,
) -> Result<Vec<PartitionSample>> {
    use rayon::prelude::*;
    (0..count)
        .into_par_iter()
        .map(|m| sample_partition(hm, instance, mode, &mut rng.child(m as u64), slack, track_grad))
        .collect()
}

/// Action sequence that decodes to `partition`.
pub fn partition_actions(instance: &RoutingInstance, partition: &Partition) -> Vec<usize> {
    let mut a = Vec::new();
    for r in 0..partition.len() {
        a.extend_from_slice(partition.members(r));
        a.push(instance.depot);
    }
    a
}

/// Log-probability of decoding `partition` by sampling from `hm`. Infeasible
/// trajectories are reported as errors.
pub fn trajectory_log_prob(
    hm: &PartitionHeatmap,
    instance: &RoutingInstance,
    partition: &Partition,
    slack: usize,
) -> Result<f64> {
    let mut state = PartitionState::new(instance, slack);
    let mut scratch = vec![usize::MAX; hm.n];
    let mut logp = 0.0;
    for a in partition_actions(instance, partition) {
        if state.done {
            return Err(GlopError::Infeasible("partition continues after decoding ended".into()));
        }
        let feas = feasible_actions(&state, instance)?;
        let Ok(k) = feas.binary_search(&a) else {
            return Err(GlopError::Infeasible(format!("node {a} is not a feasible action")));
        };
        let w = weights(hm, &state, &feas, &mut scratch);
        let z: f64 = w.iter().map(|x| x.0).sum();
        logp += w[k].0.ln() - z.ln();
        state.apply(instance, a);
    }
    if !state.done {
        return Err(GlopError::Infeasible("partition ends before decoding does".into()));
    }
    Ok(logp)
}
