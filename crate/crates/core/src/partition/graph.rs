//! Sparsified k-nearest-neighbour input graphs for the partition model.

use std::f64::consts::PI;

use crate::autodiff::Matrix;
use crate::error::{GlopError, Result};
use crate::types::{ProblemKind, RoutingInstance};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseGraph {
    pub kind: ProblemKind,
    pub n_nodes: usize,
    /// Effective k after clamping to `n_nodes - 1`.
    pub k: usize,
    /// One row per node.
    pub node_feats: Matrix,
    /// Directed edges `src[e] -> dst[e]`, grouped by source in ascending order.
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    /// One row per edge.
    pub edge_feats: Matrix,
}

impl SparseGraph {
    pub fn n_edges(&self) -> usize {
        self.src.len()
    }

    pub fn out_degree(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_nodes];
        for &s in &self.src {
            deg[s] += 1;
        }
        deg
    }
}

pub fn node_dim(kind: ProblemKind) -> usize {
    match kind {
        ProblemKind::Pctsp => 4,
        _ => 3,
    }
}

pub fn edge_dim(kind: ProblemKind) -> usize {
    match kind {
        ProblemKind::Cvrp => 2,
        _ => 1,
    }
}

/// Absolute angle difference wrapped into `[0, pi]`.
fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).abs() % (2.0 * PI);
    d.min(2.0 * PI - d)
}

/// The `k` smallest keys (ties broken by index), in ascending key order.
fn k_smallest(mut cand: Vec<(f64, usize)>, k: usize) -> Vec<usize> {
    let key = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if cand.len() > k {
        cand.select_nth_unstable_by(k, key);
        cand.truncate(k);
    }
    cand.sort_by(key);
    cand.into_iter().map(|c| c.1).collect()
}

/// Builds the input graph of a CVRP or PCTSP instance.
///
/// CVRP customers connect to the depot and to their `k - 1` nearest
/// customers by polar angle around the depot; the depot connects to its `k`
/// nearest customers by distance. PCTSP nodes connect to their `k` nearest
/// nodes by distance. `k` is clamped to `n_nodes - 1`.
pub fn build_sparse_graph(instance: &RoutingInstance, k: usize) -> Result<SparseGraph> {
    let kind = instance.kind;
    if kind == ProblemKind::Tsp {
        return Err(GlopError::Config("sparse partition graphs need a CVRP or PCTSP instance".into()));
    }
    instance.check()?;
    let n = instance.len();
    if n < 2 {
        return Err(GlopError::Input("instance needs a depot and at least one customer".into()));
    }
    let k = k.clamp(1, n - 1);
    let depot = instance.depot;
    let c0 = instance.coords[depot];
    let radius: Vec<f64> = instance.coords.iter().map(|p| p.dist(&c0)).collect();
    let theta: Vec<f64> = instance.coords.iter().map(|p| (p.y - c0.y).atan2(p.x - c0.x)).collect();

    let mut nf = Vec::with_capacity(n * node_dim(kind));
    match kind {
        ProblemKind::Cvrp => {
            for i in 0..n {
                let d = if i == depot { 0.0 } else { instance.demands[i] / instance.capacity };
                nf.extend([d, radius[i], theta[i] / PI]);
            }
        }
        _ => {
            let pmax = instance.prizes.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
            let qmax = instance.penalties.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
            for i in 0..n {
                nf.extend([instance.prizes[i] / pmax, instance.penalties[i] / qmax, radius[i], theta[i] / PI]);
            }
        }
    }

    let (mut src, mut dst, mut ef) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..n {
        let nbrs = match kind {
            ProblemKind::Cvrp if i == depot => {
                k_smallest((0..n).filter(|&j| j != i).map(|j| (radius[j], j)).collect(), k)
            }
            ProblemKind::Cvrp => {
                let mut v = vec![depot];
                let cand = (0..n)
                    .filter(|&j| j != i && j != depot)
                    .map(|j| (angle_gap(theta[i], theta[j]), j))
                    .collect();
                v.extend(k_smallest(cand, k - 1));
                v
            }
            _ => {
                let ci = instance.coords[i];
                k_smallest(
                    (0..n).filter(|&j| j != i).map(|j| (ci.dist(&instance.coords[j]), j)).collect(),
                    k,
                )
            }
        };
        for j in nbrs {
            src.push(i);
            dst.push(j);
            let d = instance.coords[i].dist(&instance.coords[j]);
            match kind {
                ProblemKind::Cvrp => ef.extend([d, angle_gap(theta[i], theta[j]) / PI]),
                _ => ef.push(d),
            }
        }
    }
    let e = src.len();
    let g = SparseGraph {
        kind,
        n_nodes: n,
        k,
        node_feats: Matrix::from_vec(n, node_dim(kind), nf),
        src,
        dst,
        edge_feats: Matrix::from_vec(e, edge_dim(kind), ef),
    };
    if !g.node_feats.is_finite() || !g.edge_feats.is_finite() {
        return Err(GlopError::Input("non-finite graph features".into()));
    }
    Ok(g)
}
