//! Anisotropic gated message passing producing partition heatmaps.
//!
//! Each layer updates edge embeddings from their endpoints, turns them into
//! sigmoid gates, and averages gated neighbour messages into the node
//! embeddings. Both updates are residual and layer-normalised. A two-layer
//! head maps the final edge embeddings to scores `s = C * tanh(.)` and the
//! heatmap entry of a represented pair is `exp(s)`.

use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Matrix, ParamSet, Tape, Var};
use crate::error::{GlopError, Result};
use crate::partition::graph::{edge_dim, node_dim, SparseGraph};
use crate::rng::Rng;
use crate::types::ProblemKind;

/// Heatmap value of pairs that are not edges of the sparse graph.
pub const HEAT_FLOOR: f64 = 1e-10;
/// Score clipping constant.
pub const SCORE_CLIP: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GnnConfig {
    pub kind: ProblemKind,
    pub embed_dim: usize,
    pub layers: usize,
}

impl GnnConfig {
    pub fn toy(kind: ProblemKind) -> Self {
        GnnConfig { kind, embed_dim: 32, layers: 3 }
    }

    pub fn full(kind: ProblemKind) -> Self {
        GnnConfig { kind, embed_dim: 48, layers: 12 }
    }

    pub fn check(&self) -> Result<()> {
        if self.kind == ProblemKind::Tsp {
            return Err(GlopError::Config("partition models are for CVRP and PCTSP".into()));
        }
        if self.embed_dim == 0 || self.layers == 0 {
            return Err(GlopError::Config("GNN dimensions must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerIds {
    u: usize,
    v: usize,
    a: usize,
    b: usize,
    c: usize,
    c_b: usize,
    ln_h_g: usize,
    ln_h_b: usize,
    ln_e_g: usize,
    ln_e_b: usize,
}

/// Parameter names and shapes in storage order. The last field is the fan-in
/// used for initialisation, with 0 marking gains and 1 marking biases.
fn param_shapes(cfg: &GnnConfig) -> Vec<(String, usize, usize, usize)> {
    let d = cfg.embed_dim;
    let (nd, ed) = (node_dim(cfg.kind), edge_dim(cfg.kind));
    let mut v = vec![
        ("node_in.w".to_string(), nd, d, nd),
        ("node_in.b".to_string(), 1, d, 1),
        ("edge_in.w".to_string(), ed, d, ed),
        ("edge_in.b".to_string(), 1, d, 1),
    ];
    for l in 0..cfg.layers {
        let p = |s: &str| format!("gnn{l}.{s}");
        for m in ["u", "v", "a", "b", "c"] {
            v.push((p(m), d, d, d));
        }
        v.push((p("c_b"), 1, d, 1));
        v.push((p("ln_h.g"), 1, d, 0));
        v.push((p("ln_h.b"), 1, d, 1));
        v.push((p("ln_e.g"), 1, d, 0));
        v.push((p("ln_e.b"), 1, d, 1));
    }
    v.push(("out.w1".into(), d, d, d));
    v.push(("out.b1".into(), 1, d, 1));
    v.push(("out.w2".into(), d, 1, d));
    v.push(("out.b2".into(), 1, 1, 1));
    v
}

#[derive(Debug, Clone)]
pub struct PartitionModel {
    pub cfg: GnnConfig,
    pub params: ParamSet,
    layers: Vec<LayerIds>,
}

impl PartitionModel {
    pub fn init(cfg: GnnConfig, rng: &mut Rng) -> Result<Self> {
        cfg.check()?;
        let mut params = ParamSet::default();
        for (name, r, c, fan) in param_shapes(&cfg) {
            let data = match fan {
                0 => vec![1.0; r * c],
                1 => vec![0.0; r * c],
                f => {
                    let b = 1.0 / (f as f64).sqrt();
                    let u = Uniform::new_inclusive(-b, b).expect("valid bounds");
                    (0..r * c).map(|_| u.sample(rng)).collect()
                }
            };
            params.push(name, Matrix::from_vec(r, c, data));
        }
        Self::from_params(cfg, params)
    }

    pub fn from_params(cfg: GnnConfig, params: ParamSet) -> Result<Self> {
        cfg.check()?;
        let shapes = param_shapes(&cfg);
        if shapes.len() != params.len() {
            return Err(GlopError::Input(format!(
                "expected {} tensors, found {}",
                shapes.len(),
                params.len()
            )));
        }
        for ((name, r, c, _), (pn, pv)) in shapes.iter().zip(params.names.iter().zip(&params.values)) {
            if name != pn || (*r, *c) != pv.shape() {
                return Err(GlopError::Input(format!("tensor {pn} does not match {name} {r}x{c}")));
            }
        }
        let id = |s: String| params.index_of(&s).expect("name checked above");
        let layers = (0..cfg.layers)
            .map(|l| LayerIds {
                u: id(format!("gnn{l}.u")),
                v: id(format!("gnn{l}.v")),
                a: id(format!("gnn{l}.a")),
                b: id(format!("gnn{l}.b")),
                c: id(format!("gnn{l}.c")),
                c_b: id(format!("gnn{l}.c_b")),
                ln_h_g: id(format!("gnn{l}.ln_h.g")),
                ln_h_b: id(format!("gnn{l}.ln_h.b")),
                ln_e_g: id(format!("gnn{l}.ln_e.g")),
                ln_e_b: id(format!("gnn{l}.ln_e.b")),
            })
            .collect();
        Ok(PartitionModel { cfg, params, layers })
    }

    fn p(&self, t: &mut Tape, name: &str) -> Var {
        let i = self.params.index_of(name).expect("known parameter");
        t.param(&self.params, i)
    }

    /// Edge scores `s` (one row per edge) recorded on `t`.
    pub fn scores(&self, t: &mut Tape, g: &SparseGraph) -> Result<Var> {
        if g.kind != self.cfg.kind {
            return Err(GlopError::Config(format!(
                "model is for {} but the graph is {}",
                self.cfg.kind, g.kind
            )));
        }
        let n = g.n_nodes;
        let ps = &self.params;
        let nf = t.constant(g.node_feats.clone());
        let ef = t.constant(g.edge_feats.clone());
        let (w, b) = (self.p(t, "node_in.w"), self.p(t, "node_in.b"));
        let x = t.matmul(nf, w);
        let mut h = t.add_row(x, b);
        let (w, b) = (self.p(t, "edge_in.w"), self.p(t, "edge_in.b"));
        let x = t.matmul(ef, w);
        let mut e = t.add_row(x, b);
        let inv_deg: Vec<f64> = g.out_degree().iter().map(|&d| 1.0 / d.max(1) as f64).collect();
        for l in &self.layers {
            let hs = t.gather_rows(h, g.src.clone());
            let hd = t.gather_rows(h, g.dst.clone());
            let pa = t.param(ps, l.a);
            let pb = t.param(ps, l.b);
            let pc = t.param(ps, l.c);
            let pcb = t.param(ps, l.c_b);
            let x1 = t.matmul(e, pc);
            let x2 = t.matmul(hs, pa);
            let x3 = t.matmul(hd, pb);
            let s = t.sum(&[x1, x2, x3]);
            let e_hat = t.add_row(s, pcb);
            let gate = t.sigmoid(e_hat);

            let pv = t.param(ps, l.v);
            let hv = t.matmul(h, pv);
            let hv_d = t.gather_rows(hv, g.dst.clone());
            let msg = t.mul(gate, hv_d);
            let summed = t.scatter_add_rows(msg, g.src.clone(), n);
            let agg = t.scale_rows(summed, inv_deg.clone());
            let pu = t.param(ps, l.u);
            let hu = t.matmul(h, pu);
            let pre = t.add(hu, agg);
            let (lg, lb) = (t.param(ps, l.ln_h_g), t.param(ps, l.ln_h_b));
            let normed = t.layer_norm(pre, lg, lb);
            let act = t.relu(normed);
            h = t.add(h, act);

            let (lg, lb) = (t.param(ps, l.ln_e_g), t.param(ps, l.ln_e_b));
            let normed = t.layer_norm(e_hat, lg, lb);
            let act = t.relu(normed);
            e = t.add(e, act);
        }
        let (w1, b1) = (self.p(t, "out.w1"), self.p(t, "out.b1"));
        let x = t.matmul(e, w1);
        let x = t.add_row(x, b1);
        let x = t.relu(x);
        let (w2, b2) = (self.p(t, "out.w2"), self.p(t, "out.b2"));
        let x = t.matmul(x, w2);
        let x = t.add_row(x, b2);
        let x = t.tanh(x);
        Ok(t.scale(x, SCORE_CLIP))
    }

    /// Heatmap without recording gradients.
    pub fn heatmap(&self, g: &SparseGraph) -> Result<PartitionHeatmap> {
        let mut t = Tape::new();
        let s = self.scores(&mut t, g)?;
        Ok(PartitionHeatmap::from_scores(g, &t.value(s).data))
    }
}

/// Sparse heatmap: `exp(s)` on graph edges, [`HEAT_FLOOR`] elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionHeatmap {
    pub n: usize,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub scores: Vec<f64>,
    pub h: Vec<f64>,
    /// Edges leaving node `i` are `row_start[i]..row_start[i + 1]`.
    row_start: Vec<usize>,
}

impl PartitionHeatmap {
    pub fn from_scores(g: &SparseGraph, scores: &[f64]) -> Self {
        assert_eq!(scores.len(), g.n_edges());
        let mut row_start = vec![0; g.n_nodes + 1];
        for &s in &g.src {
            row_start[s + 1] += 1;
        }
        for i in 0..g.n_nodes {
            row_start[i + 1] += row_start[i];
        }
        PartitionHeatmap {
            n: g.n_nodes,
            src: g.src.clone(),
            dst: g.dst.clone(),
            scores: scores.to_vec(),
            h: scores.iter().map(|s| s.exp()).collect(),
            row_start,
        }
    }

    /// Heatmap over the complete digraph from a dense matrix of positive values.
    pub fn from_dense(h: &[Vec<f64>]) -> Self {
        let n = h.len();
        let (mut src, mut dst, mut s, mut hv) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let mut row_start = vec![0];
        for (i, row) in h.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if i != j {
                    assert!(v > 0.0, "heatmap entries must be positive");
                    src.push(i);
                    dst.push(j);
                    s.push(v.ln());
                    hv.push(v);
                }
            }
            row_start.push(src.len());
        }
        PartitionHeatmap {
            n,
            src,
            dst,
            h: hv,
            scores: s,
            row_start,
        }
    }

    /// Edge indices leaving `i`.
    pub fn out_edges(&self, i: usize) -> std::ops::Range<usize> {
        self.row_start[i]..self.row_start[i + 1]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.out_edges(i).find(|&e| self.dst[e] == j).map_or(HEAT_FLOOR, |e| self.h[e])
    }

    pub fn dense(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![HEAT_FLOOR; self.n]; self.n];
        for e in 0..self.src.len() {
            m[self.src[e]][self.dst[e]] = self.h[e];
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Grads;
    use crate::io::{generate, DatasetSpec};
    use crate::partition::graph::build_sparse_graph;
    use crate::types::{Point, RoutingInstance};

    fn model(kind: ProblemKind) -> PartitionModel {
        PartitionModel::init(GnnConfig { kind, embed_dim: 8, layers: 2 }, &mut Rng::new(5)).unwrap()
    }

    #[test]
    fn heatmap_is_positive_and_deterministic() {
        let inst = generate(&DatasetSpec::new(ProblemKind::Cvrp, 30, 1, 2)).unwrap().remove(0);
        let g = build_sparse_graph(&inst, 6).unwrap();
        let m = model(ProblemKind::Cvrp);
        let a = m.heatmap(&g).unwrap();
        assert_eq!(a, m.heatmap(&g).unwrap());
        assert!(a.dense().iter().flatten().all(|&v| v > 0.0 && v.is_finite()));
    }

    #[test]
    fn relabelling_customers_permutes_the_heatmap() {
        let inst = generate(&DatasetSpec::new(ProblemKind::Cvrp, 12, 1, 8)).unwrap().remove(0);
        let n = inst.len();
        // perm[old] = new, depot fixed
        let perm: Vec<usize> = std::iter::once(0).chain((1..n).rev()).collect();
        let mut coords = vec![Point::default(); n];
        let mut demands = vec![0.0; n];
        for i in 0..n {
            coords[perm[i]] = inst.coords[i];
            demands[perm[i]] = inst.demands[i];
        }
        let other = RoutingInstance::cvrp(coords, demands, inst.capacity).unwrap();
        let m = model(ProblemKind::Cvrp);
        let a = m.heatmap(&build_sparse_graph(&inst, 5).unwrap()).unwrap().dense();
        let b = m.heatmap(&build_sparse_graph(&other, 5).unwrap()).unwrap().dense();
        for i in 0..n {
            for j in 0..n {
                let (x, y) = (a[i][j], b[perm[i]][perm[j]]);
                assert!((x - y).abs() <= 1e-5 * x.max(1.0), "{i},{j}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn scores_gradient_matches_finite_differences() {
        let inst = generate(&DatasetSpec::new(ProblemKind::Pctsp, 20, 1, 4)).unwrap().remove(0);
        let g = build_sparse_graph(&inst, 4).unwrap();
        let m = model(ProblemKind::Pctsp);
        let mut t = Tape::new();
        let s = m.scores(&mut t, &g).unwrap();
        let w: Vec<f64> = (0..g.n_edges()).map(|e| ((e * 7) % 5) as f64 - 2.0).collect();
        let grads: Grads = t.backward_with_seed(s, Matrix::from_vec(g.n_edges(), 1, w.clone()), m.params.len());
        let f = |m: &PartitionModel| -> f64 {
            let mut t = Tape::new();
            let s = m.scores(&mut t, &g).unwrap();
            t.value(s).data.iter().zip(&w).map(|(a, b)| a * b).sum()
        };
        for (pi, k) in [(0, 1), (6, 3), (m.params.len() - 3, 2)] {
            let mut plus = m.clone();
            let mut minus = m.clone();
            let h = 1e-5;
            std::sync::Arc::make_mut(&mut plus.params.values[pi]).data[k] += h;
            std::sync::Arc::make_mut(&mut minus.params.values[pi]).data[k] -= h;
            let fd = (f(&plus) - f(&minus)) / (2.0 * h);
            let an = grads.0[pi].as_ref().unwrap().data[k];
            assert!((fd - an).abs() <= 1e-5 * fd.abs().max(1.0), "param {pi}: {fd} vs {an}");
        }
    }

    #[test]
    fn dense_round_trip() {
        let d = vec![vec![1.0, 2.0, 3.0], vec![4.0, 1.0, 0.5], vec![0.25, 8.0, 1.0]];
        let hm = PartitionHeatmap::from_dense(&d);
        assert_eq!(hm.get(0, 2), 3.0);
        assert_eq!(hm.get(2, 0), 0.25);
        assert_eq!(hm.get(1, 1), HEAT_FLOOR);
    }
}
