//! Attention encoder and bidirectional pointer decoder for SHPPs.
//!
//! The encoder is a stack of multi-head self-attention and feed-forward
//! blocks with residual connections. Layer normalisation is used instead of
//! batch normalisation so that an instance's embeddings never depend on the
//! other instances in its batch.
//!
//! The decoder builds the path one node at a time. Its query is the sum of a
//! projection of the graph embedding and a projection of the embeddings of
//! the last placed node and the destination. A masked multi-head glimpse over
//! the node embeddings is followed by single-head compatibility logits
//! clipped with `C * tanh`. The forward pass starts at node 0 and heads for
//! node `n-1`; the backward pass swaps the two and is reversed afterwards.

use rand::Rng as _;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Matrix, ParamSet, Tape, Var};
use crate::error::{GlopError, Result};
use crate::rng::Rng;
use crate::types::{PathOrder, Point};

/// Logit clipping constant.
pub const TANH_CLIP: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Segment size the policy is trained for.
    pub n: usize,
    pub embed_dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub ff_dim: usize,
}

impl ModelConfig {
    /// Desk-scale default.
    pub fn toy(n: usize) -> Self {
        ModelConfig { n, embed_dim: 64, heads: 2, layers: 3, ff_dim: 128 }
    }

    /// The full-size architecture.
    pub fn full(n: usize) -> Self {
        ModelConfig { n, embed_dim: 128, heads: 8, layers: 6, ff_dim: 512 }
    }

    pub fn check(&self) -> Result<()> {
        if self.embed_dim == 0 || self.heads == 0 || self.layers == 0 || self.ff_dim == 0 {
            return Err(GlopError::Config("model dimensions must be positive".into()));
        }
        if !self.embed_dim.is_multiple_of(self.heads) {
            return Err(GlopError::Config("embed_dim must be divisible by heads".into()));
        }
        if self.n < 3 {
            return Err(GlopError::Config("segment size must be at least 3".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    Greedy,
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy)]
struct LayerIds {
    wq: usize,
    wk: usize,
    wv: usize,
    wo: usize,
    ln1_g: usize,
    ln1_b: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    ln2_g: usize,
    ln2_b: usize,
}

#[derive(Debug, Clone)]
struct Ids {
    init_w: usize,
    init_b: usize,
    layers: Vec<LayerIds>,
    fixed: usize,
    step: usize,
    glimpse_k: usize,
    glimpse_v: usize,
    glimpse_o: usize,
    logit_k: usize,
}

/// Learnable weights plus the architecture they belong to.
#[derive(Debug, Clone)]
pub struct Policy {
    pub cfg: ModelConfig,
    pub params: ParamSet,
    ids: Ids,
}

/// Encoder output on a tape.
#[derive(Debug, Clone, Copy)]
pub struct Encoded {
    pub nodes: Var,
    pub graph: Var,
}

/// Per-instance decoder inputs computed once from the embeddings.
#[derive(Debug, Clone, Copy)]
struct Prepared {
    h: Var,
    fixed: Var,
    glimpse_k: Var,
    glimpse_v: Var,
    logit_k: Var,
    n: usize,
}

#[derive(Debug, Clone)]
pub struct DirDecode {
    pub path: PathOrder,
    /// Total log-probability, and its tape variable when decoding on a tape
    /// that will be differentiated.
    pub logp: f64,
    pub logp_var: Option<Var>,
    /// Log-probability of each chosen action.
    pub step_logp: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DecodeOutput {
    pub fd: DirDecode,
    pub bd: DirDecode,
    pub greedy: bool,
}

impl DecodeOutput {
    /// `log p(fd, bd) = log p(fd) + log p(bd)`.
    pub fn joint_logp(&self) -> f64 {
        self.fd.logp + self.bd.logp
    }
}

/// Node names in checkpoint order.
fn param_shapes(cfg: &ModelConfig) -> Vec<(String, usize, usize, usize)> {
    // (name, rows, cols, fan_in); fan_in 0 marks a norm gain, 1 a zero bias
    let d = cfg.embed_dim;
    let mut v = vec![("init.w".to_string(), 2, d, 2), ("init.b".to_string(), 1, d, 2)];
    for l in 0..cfg.layers {
        let p = |s: &str| format!("enc{l}.{s}");
        v.extend([
            (p("wq"), d, d, d),
            (p("wk"), d, d, d),
            (p("wv"), d, d, d),
            (p("wo"), d, d, d),
            (p("ln1.g"), 1, d, 0),
            (p("ln1.b"), 1, d, 1),
            (p("ff.w1"), d, cfg.ff_dim, d),
            (p("ff.b1"), 1, cfg.ff_dim, d),
            (p("ff.w2"), cfg.ff_dim, d, cfg.ff_dim),
            (p("ff.b2"), 1, d, cfg.ff_dim),
            (p("ln2.g"), 1, d, 0),
            (p("ln2.b"), 1, d, 1),
        ]);
    }
    v.extend([
        ("dec.fixed".to_string(), d, d, d),
        ("dec.step".to_string(), 2 * d, d, 2 * d),
        ("dec.glimpse_k".to_string(), d, d, d),
        ("dec.glimpse_v".to_string(), d, d, d),
        ("dec.glimpse_o".to_string(), d, d, d),
        ("dec.logit_k".to_string(), d, d, d),
    ]);
    v
}

impl Policy {
    /// Fresh weights, uniform in `±1/sqrt(fan_in)`.
    pub fn init(cfg: ModelConfig, rng: &mut Rng) -> Result<Self> {
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

    /// Wraps existing weights after checking names and shapes.
    pub fn from_params(cfg: ModelConfig, params: ParamSet) -> Result<Self> {
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
        let id = |s: &str| params.index_of(s).expect("name checked above");
        let layers = (0..cfg.layers)
            .map(|l| {
                let p = |s: &str| id(&format!("enc{l}.{s}"));
                LayerIds {
                    wq: p("wq"),
                    wk: p("wk"),
                    wv: p("wv"),
                    wo: p("wo"),
                    ln1_g: p("ln1.g"),
                    ln1_b: p("ln1.b"),
                    w1: p("ff.w1"),
                    b1: p("ff.b1"),
                    w2: p("ff.w2"),
                    b2: p("ff.b2"),
                    ln2_g: p("ln2.g"),
                    ln2_b: p("ln2.b"),
                }
            })
            .collect();
        let ids = Ids {
            init_w: id("init.w"),
            init_b: id("init.b"),
            layers,
            fixed: id("dec.fixed"),
            step: id("dec.step"),
            glimpse_k: id("dec.glimpse_k"),
            glimpse_v: id("dec.glimpse_v"),
            glimpse_o: id("dec.glimpse_o"),
            logit_k: id("dec.logit_k"),
        };
        Ok(Policy { cfg, params, ids })
    }

    fn p(&self, t: &mut Tape, idx: usize) -> Var {
        t.param(&self.params, idx)
    }

    fn mha(&self, t: &mut Tape, q: Var, k: Var, v: Var, mask: Option<&[bool]>) -> Var {
        let d = self.cfg.embed_dim;
        let dk = d / self.cfg.heads;
        let inv = 1.0 / (dk as f64).sqrt();
        let mut heads = Vec::with_capacity(self.cfg.heads);
        for h in 0..self.cfg.heads {
            let qh = t.slice_cols(q, h * dk, dk);
            let kh = t.slice_cols(k, h * dk, dk);
            let vh = t.slice_cols(v, h * dk, dk);
            let c = t.matmul_t(qh, kh);
            let c = t.scale(c, inv);
            let a = match mask {
                None => t.softmax(c),
                Some(m) => {
                    let l = t.log_softmax_masked(c, m.to_vec());
                    t.exp(l)
                }
            };
            heads.push(t.matmul(a, vh));
        }
        if heads.len() == 1 {
            heads[0]
        } else {
            t.concat_cols(&heads)
        }
    }

    pub fn encode(&self, t: &mut Tape, coords: &[Point]) -> Encoded {
        let n = coords.len();
        let x = t.constant(Matrix::from_vec(n, 2, coords.iter().flat_map(|p| [p.x, p.y]).collect()));
        let (w0, b0) = (self.p(t, self.ids.init_w), self.p(t, self.ids.init_b));
        let h0 = t.matmul(x, w0);
        let mut h = t.add_row(h0, b0);
        for l in &self.ids.layers {
            let (wq, wk, wv, wo) = (self.p(t, l.wq), self.p(t, l.wk), self.p(t, l.wv), self.p(t, l.wo));
            let q = t.matmul(h, wq);
            let k = t.matmul(h, wk);
            let v = t.matmul(h, wv);
            let heads = self.mha(t, q, k, v, None);
            let att = t.matmul(heads, wo);
            let r = t.add(h, att);
            let (g1, b1n) = (self.p(t, l.ln1_g), self.p(t, l.ln1_b));
            h = t.layer_norm(r, g1, b1n);
            let (w1, b1, w2, b2) = (self.p(t, l.w1), self.p(t, l.b1), self.p(t, l.w2), self.p(t, l.b2));
            let f = t.matmul(h, w1);
            let f = t.add_row(f, b1);
            let f = t.relu(f);
            let f = t.matmul(f, w2);
            let f = t.add_row(f, b2);
            let r = t.add(h, f);
            let (g2, b2n) = (self.p(t, l.ln2_g), self.p(t, l.ln2_b));
            h = t.layer_norm(r, g2, b2n);
        }
        let graph = t.mean_rows(h);
        Encoded { nodes: h, graph }
    }

    fn prepare(&self, t: &mut Tape, enc: Encoded, n: usize) -> Prepared {
        let wf = self.p(t, self.ids.fixed);
        let fixed = t.matmul(enc.graph, wf);
        let wk = self.p(t, self.ids.glimpse_k);
        let glimpse_k = t.matmul(enc.nodes, wk);
        let wv = self.p(t, self.ids.glimpse_v);
        let glimpse_v = t.matmul(enc.nodes, wv);
        let wl = self.p(t, self.ids.logit_k);
        let logit_k = t.matmul(enc.nodes, wl);
        Prepared { h: enc.nodes, fixed, glimpse_k, glimpse_v, logit_k, n }
    }

    /// Log-probabilities over next nodes (a `1×n` row, `-inf` where masked).
    fn step_logits(&self, t: &mut Tape, pr: &Prepared, last: usize, dest: usize, mask: &[bool]) -> Var {
        let d = self.cfg.embed_dim;
        let lr = t.gather_rows(pr.h, vec![last]);
        let dr = t.gather_rows(pr.h, vec![dest]);
        let ctx = t.concat_cols(&[lr, dr]);
        let ws = self.p(t, self.ids.step);
        let step = t.matmul(ctx, ws);
        let q = t.add(pr.fixed, step);
        let g = self.mha(t, q, pr.glimpse_k, pr.glimpse_v, Some(mask));
        let wo = self.p(t, self.ids.glimpse_o);
        let g = t.matmul(g, wo);
        let logits = t.matmul_t(g, pr.logit_k);
        let logits = t.scale(logits, 1.0 / (d as f64).sqrt());
        let u = t.tanh(logits);
        let u = t.scale(u, TANH_CLIP);
        t.log_softmax_masked(u, mask.to_vec())
    }

    /// Decodes one direction. With `forced` the given interior actions are
    /// replayed instead of chosen, which is how trajectories are rescored.
    #[allow(clippy::too_many_arguments)]
    fn decode_dir(
        &self,
        t: &mut Tape,
        pr: &Prepared,
        dir: Direction,
        mode: DecodeMode,
        rng: Option<&mut Rng>,
        forced: Option<&[usize]>,
        track: bool,
    ) -> Result<DirDecode> {
        let n = pr.n;
        let (start, dest) = match dir {
            Direction::Forward => (0, n - 1),
            Direction::Backward => (n - 1, 0),
        };
        let mut visited = vec![false; n];
        visited[start] = true;
        visited[dest] = true;
        let mut seq = vec![start];
        let mut step_logp = Vec::with_capacity(n.saturating_sub(2));
        let mut vars = Vec::new();
        let mut rng = rng;
        for s in 0..n.saturating_sub(2) {
            let mask: Vec<bool> = visited.iter().map(|&v| !v).collect();
            let last = *seq.last().expect("non-empty");
            let lp = self.step_logits(t, pr, last, dest, &mask);
            let row = t.value(lp).data.clone();
            let a = if let Some(f) = forced {
                let a = f[s];
                if a >= n || !mask[a] {
                    return Err(GlopError::Input(format!("forced action {a} is infeasible")));
                }
                a
            } else {
                match mode {
                    DecodeMode::Greedy => argmax_masked(&row, &mask)?,
                    DecodeMode::Sample => {
                        let r = rng.as_deref_mut().ok_or_else(|| {
                            GlopError::Internal("sampling decode needs a random stream".into())
                        })?;
                        sample_masked(&row, &mask, r)?
                    }
                }
            };
            step_logp.push(row[a]);
            if track {
                vars.push(t.pick(lp, 0, a));
            }
            visited[a] = true;
            seq.push(a);
        }
        seq.push(dest);
        if dir == Direction::Backward {
            seq.reverse();
        }
        let logp = step_logp.iter().sum();
        let logp_var = if track && !vars.is_empty() { Some(t.sum(&vars)) } else { None };
        Ok(DirDecode { path: PathOrder(seq), logp, logp_var, step_logp })
    }

    /// Encodes and decodes both directions on `t`.
    pub fn decode_bidirectional(
        &self,
        t: &mut Tape,
        coords: &[Point],
        mode: DecodeMode,
        rng: Option<&mut Rng>,
        track: bool,
    ) -> Result<DecodeOutput> {
        let enc = self.encode(t, coords);
        let pr = self.prepare(t, enc, coords.len());
        let mut rng = rng;
        let fd = self.decode_dir(t, &pr, Direction::Forward, mode, rng.as_deref_mut(), None, track)?;
        let bd = self.decode_dir(t, &pr, Direction::Backward, mode, rng, None, track)?;
        Ok(DecodeOutput { fd, bd, greedy: mode == DecodeMode::Greedy })
    }

    /// Greedy and sampled decodes sharing one encoding. Only the sampled
    /// rollouts are tracked for differentiation.
    pub fn training_rollouts(
        &self,
        t: &mut Tape,
        coords: &[Point],
        rng: &mut Rng,
    ) -> Result<(DecodeOutput, DecodeOutput)> {
        let enc = self.encode(t, coords);
        let pr = self.prepare(t, enc, coords.len());
        let g = DecodeMode::Greedy;
        let s = DecodeMode::Sample;
        let gf = self.decode_dir(t, &pr, Direction::Forward, g, None, None, false)?;
        let gb = self.decode_dir(t, &pr, Direction::Backward, g, None, None, false)?;
        let sf = self.decode_dir(t, &pr, Direction::Forward, s, Some(rng), None, true)?;
        let sb = self.decode_dir(t, &pr, Direction::Backward, s, Some(rng), None, true)?;
        Ok((
            DecodeOutput { fd: gf, bd: gb, greedy: true },
            DecodeOutput { fd: sf, bd: sb, greedy: false },
        ))
    }

    /// Rescores given paths; returns the tape variables of both total
    /// log-probabilities (or `None` when a path has no free choices).
    pub fn score_paths(
        &self,
        t: &mut Tape,
        coords: &[Point],
        fd: &PathOrder,
        bd: &PathOrder,
    ) -> Result<(DirDecode, DirDecode)> {
        let n = coords.len();
        fd.check(n)?;
        bd.check(n)?;
        let enc = self.encode(t, coords);
        let pr = self.prepare(t, enc, n);
        let f_actions: Vec<usize> = fd.order()[1..n - 1].to_vec();
        let mut b_actions: Vec<usize> = bd.order()[1..n - 1].to_vec();
        b_actions.reverse();
        let f = self.decode_dir(t, &pr, Direction::Forward, DecodeMode::Greedy, None, Some(&f_actions), true)?;
        let b = self.decode_dir(t, &pr, Direction::Backward, DecodeMode::Greedy, None, Some(&b_actions), true)?;
        Ok((f, b))
    }

    /// Greedy decodes in both directions; returns the shorter path under
    /// `coords` (forward on ties).
    pub fn inference(&self, coords: &[Point]) -> Result<PathOrder> {
        if coords.len() <= 3 {
            return Ok(PathOrder::identity(coords.len()));
        }
        let mut t = Tape::new();
        let out = self.decode_bidirectional(&mut t, coords, DecodeMode::Greedy, None, false)?;
        let lf = coords_length(coords, out.fd.path.order());
        let lb = coords_length(coords, out.bd.path.order());
        Ok(if lb < lf { out.bd.path } else { out.fd.path })
    }

    /// Node embeddings (`n×d`) without building gradients.
    pub fn embeddings(&self, coords: &[Point]) -> Matrix {
        let mut t = Tape::new();
        let e = self.encode(&mut t, coords);
        t.value(e.nodes).clone()
    }
}

/// Euclidean open-path length over `coords`.
pub fn coords_length(coords: &[Point], order: &[usize]) -> f64 {
    order.windows(2).map(|w| coords[w[0]].dist(&coords[w[1]])).sum()
}

fn argmax_masked(row: &[f64], mask: &[bool]) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (i, (&v, &ok)) in row.iter().zip(mask).enumerate() {
        if ok && best.is_none_or(|b| v > row[b]) {
            best = Some(i);
        }
    }
    best.ok_or_else(|| GlopError::Internal("every action is masked".into()))
}

fn sample_masked(logp: &[f64], mask: &[bool], rng: &mut Rng) -> Result<usize> {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = None;
    for (i, (&lp, &ok)) in logp.iter().zip(mask).enumerate() {
        if !ok {
            continue;
        }
        acc += lp.exp();
        last = Some(i);
        if u < acc {
            return Ok(i);
        }
    }
    last.ok_or_else(|| GlopError::Internal("every action is masked".into()))
}
