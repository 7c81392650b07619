//! REINFORCE training of the SHPP policy and the two-stage curriculum.
//!
//! Each instance contributes `(L_fd - b) log p(fd) + (L_bd - b) log p(bd)`
//! for one sampled rollout per direction, where the baseline `b` is the mean
//! length of the two greedy rollouts of the same instance.

use std::time::{Duration, Instant};

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{coords_length, Policy};
use super::NeuralReviser;
use crate::autodiff::{Grads, Tape};
use crate::error::{GlopError, Result};
use crate::insertion::random_insertion_multi;
use crate::io::{generate_uniform_tsp, DatasetSpec};
use crate::optim::{Adam, AdamConfig};
use crate::revision::{decompose, revise_once, ReviseOptions};
use crate::rng::Rng;
use crate::task::{transform, ShppTask};
use crate::types::{PathOrder, Point, ProblemKind, Tour};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub clip_norm: f64,
    /// Multiplicative learning-rate decay applied once per epoch.
    pub lr_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { lr: 1e-4, batch: 64, epochs: 1, steps_per_epoch: 100, clip_norm: 1.0, lr_decay: 0.99 }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(GlopError::Config("learning rate must be positive".into()));
        }
        if self.batch == 0 {
            return Err(GlopError::Config("batch size must be positive".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(GlopError::Config("clip norm must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    /// Mean over instances and both directions of the sampled lengths.
    pub mean_sampled: f64,
    pub mean_greedy: f64,
    pub mean_advantage: f64,
    pub grad_norm: f64,
    pub skipped: bool,
}

/// `sum_dir adv_dir * log p(path_dir)` and its gradient for fixed paths.
pub fn surrogate_loss(
    policy: &Policy,
    coords: &[Point],
    fd: &PathOrder,
    bd: &PathOrder,
    adv_fd: f64,
    adv_bd: f64,
) -> Result<(f64, Grads)> {
    let mut t = Tape::new();
    let (f, b) = policy.score_paths(&mut t, coords, fd, bd)?;
    let mut terms = Vec::new();
    if let Some(v) = f.logp_var {
        terms.push(t.scale(v, adv_fd));
    }
    if let Some(v) = b.logp_var {
        terms.push(t.scale(v, adv_bd));
    }
    if terms.is_empty() {
        return Ok((0.0, Grads(vec![None; policy.params.len()])));
    }
    let loss = t.sum(&terms);
    Ok((t.scalar(loss), t.backward(loss, policy.params.len())))
}

struct InstanceGrad {
    grads: Grads,
    sampled: f64,
    greedy: f64,
    advantage: f64,
}

fn instance_grad(policy: &Policy, coords: &[Point], rng: &mut Rng) -> Result<InstanceGrad> {
    let mut t = Tape::new();
    let (g, s) = policy.training_rollouts(&mut t, coords, rng)?;
    let len = |p: &PathOrder| coords_length(coords, p.order());
    let b = 0.5 * (len(&g.fd.path) + len(&g.bd.path));
    let (lf, lb) = (len(&s.fd.path), len(&s.bd.path));
    let (af, ab) = (lf - b, lb - b);
    let mut terms = Vec::new();
    if let Some(v) = s.fd.logp_var {
        terms.push(t.scale(v, af));
    }
    if let Some(v) = s.bd.logp_var {
        terms.push(t.scale(v, ab));
    }
    let grads = if terms.is_empty() {
        Grads(vec![None; policy.params.len()])
    } else {
        let loss = t.sum(&terms);
        t.backward(loss, policy.params.len())
    };
    Ok(InstanceGrad { grads, sampled: 0.5 * (lf + lb), greedy: b, advantage: 0.5 * (af + ab) })
}

/// Mean policy gradient over a batch; instance `i` samples from `rng.child(i)`.
pub fn batch_gradient(policy: &Policy, batch: &[Vec<Point>], rng: &Rng) -> Result<(Grads, StepStats)> {
    let parts: Vec<Result<InstanceGrad>> = batch
        .par_iter()
        .enumerate()
        .map(|(i, c)| instance_grad(policy, c, &mut rng.child(i as u64)))
        .collect();
    let mut total = Grads(vec![None; policy.params.len()]);
    let mut st = StepStats::default();
    for p in parts {
        let p = p?;
        total.accumulate(&p.grads);
        st.mean_sampled += p.sampled;
        st.mean_greedy += p.greedy;
        st.mean_advantage += p.advantage;
    }
    let k = batch.len().max(1) as f64;
    total.scale(1.0 / k);
    st.mean_sampled /= k;
    st.mean_greedy /= k;
    st.mean_advantage /= k;
    Ok((total, st))
}

/// One clipped Adam step on a batch of SHPP coordinate sets.
pub fn train_step(
    policy: &mut Policy,
    opt: &mut Adam,
    batch: &[Vec<Point>],
    lr: f64,
    clip_norm: f64,
    rng: &Rng,
) -> Result<StepStats> {
    let (mut grads, mut st) = batch_gradient(policy, batch, rng)?;
    if !grads.is_finite() {
        st.skipped = true;
        return Ok(st);
    }
    st.grad_norm = grads.clip(clip_norm);
    opt.step(&mut policy.params, &grads, lr);
    Ok(st)
}

/// Stage-one instance: `y_max ~ U(0, 1]`, then `n` points uniform on
/// `[0, 1] x [0, y_max]`. The first and last points are the endpoints.
pub fn sample_stage1_shpp(n: usize, rng: &mut Rng) -> ShppTask {
    let y_max = 1.0 - rng.random::<f64>();
    let pts = (0..n).map(|_| Point::new(rng.random(), rng.random::<f64>() * y_max)).collect();
    ShppTask::from_points(pts)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub steps: usize,
    pub skipped: usize,
    pub history: Vec<StepStats>,
    pub elapsed_s: f64,
}

/// Stage-one training on freshly sampled SHPPs of the policy's size.
/// Stops early once `budget` is exhausted.
pub fn train_stage1(
    policy: &mut Policy,
    cfg: &TrainConfig,
    rng: &Rng,
    budget: Option<Duration>,
) -> Result<TrainReport> {
    cfg.check()?;
    let start = Instant::now();
    let mut opt = Adam::new(&policy.params, AdamConfig { lr: cfg.lr, ..Default::default() });
    let (data_rng, sample_rng) = (rng.child(0), rng.child(1));
    let mut rep = TrainReport::default();
    let n = policy.cfg.n;
    'outer: for epoch in 0..cfg.epochs {
        let lr = cfg.lr * cfg.lr_decay.powi(epoch as i32);
        for _ in 0..cfg.steps_per_epoch {
            if budget.is_some_and(|b| start.elapsed() >= b) {
                break 'outer;
            }
            let step = rep.steps as u64;
            let drng = data_rng.child(step);
            let batch: Vec<Vec<Point>> =
                (0..cfg.batch).map(|i| sample_stage1_shpp(n, &mut drng.child(i as u64)).raw).collect();
            let st = train_step(policy, &mut opt, &batch, lr, cfg.clip_norm, &sample_rng.child(step))?;
            rep.skipped += st.skipped as usize;
            rep.history.push(st);
            rep.steps += 1;
        }
    }
    rep.elapsed_s = start.elapsed().as_secs_f64();
    Ok(rep)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage2Config {
    /// Size of the uniform TSP instances the segments are cut from.
    pub tsp_n: usize,
    pub instances: usize,
    /// Fine-tuning steps per reviser.
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    /// Per-step multiplicative decay.
    pub lr_decay: f64,
    pub clip_norm: f64,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Stage2Config { tsp_n: 200, instances: 16, steps: 20, batch: 32, lr: 1e-4, lr_decay: 0.99, clip_norm: 1.0 }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Stage2SizeReport {
    pub n: usize,
    pub tasks: usize,
    /// Transformed heights of the segments the reviser was tuned on.
    pub y_max: Vec<f64>,
    pub history: Vec<StepStats>,
}

/// Transformed segments of `tours` at size `n`, each tour cut at a random
/// offset. Degenerate segments are dropped.
pub fn stage2_segments(
    instances: &[crate::types::RoutingInstance],
    tours: &[Tour],
    n: usize,
    rng: &mut Rng,
) -> Result<Vec<ShppTask>> {
    let mut out = Vec::new();
    for (inst, tour) in instances.iter().zip(tours) {
        if n > tour.len() {
            continue;
        }
        let p = rng.random_range(0..tour.len());
        for t in decompose(inst, tour, n, p)?.tasks {
            match transform(&t) {
                Ok(tt) => out.push(tt),
                Err(GlopError::Degenerate) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(out)
}

/// Fine-tunes revisers from largest to smallest on segments of Random
/// Insertion tours; each reviser's improved tours feed the next size.
pub fn curriculum_stage2(policies: &mut [Policy], cfg: &Stage2Config, rng: &Rng) -> Result<Vec<Stage2SizeReport>> {
    if policies.windows(2).any(|w| w[0].cfg.n <= w[1].cfg.n) {
        return Err(GlopError::Config("stage-two revisers must be ordered by decreasing size".into()));
    }
    let seed: u64 = rng.child(0).random();
    let spec = DatasetSpec::new(ProblemKind::Tsp, cfg.tsp_n, cfg.instances.max(1), seed);
    let instances = generate_uniform_tsp(&spec)?;
    let init_rng = rng.child(1);
    let mut tours: Vec<Tour> = instances
        .iter()
        .enumerate()
        .map(|(i, inst)| random_insertion_multi(inst, 1, &init_rng.child(i as u64)).remove(0))
        .collect();
    let mut reports = Vec::new();
    for (k, policy) in policies.iter_mut().enumerate() {
        let krng = rng.child(2 + k as u64);
        let n = policy.cfg.n;
        let segs = stage2_segments(&instances, &tours, n, &mut krng.child(0))?;
        let mut rep = Stage2SizeReport {
            n,
            tasks: segs.len(),
            y_max: segs.iter().filter_map(|t| t.record.map(|r| r.y_max)).collect(),
            history: Vec::new(),
        };
        if cfg.steps > 0 && !segs.is_empty() {
            let mut opt = Adam::new(&policy.params, AdamConfig { lr: cfg.lr, ..Default::default() });
            let pick_rng = krng.child(1);
            let mut lr = cfg.lr;
            for s in 0..cfg.steps {
                let mut r = pick_rng.child(s as u64);
                let batch: Vec<Vec<Point>> =
                    (0..cfg.batch).map(|_| segs[r.random_range(0..segs.len())].coords.clone()).collect();
                let st = train_step(policy, &mut opt, &batch, lr, cfg.clip_norm, &krng.child(2).child(s as u64))?;
                rep.history.push(st);
                lr *= cfg.lr_decay;
            }
        }
        // Revise the tours with the tuned reviser before the next size.
        let reviser = NeuralReviser::new(policy.clone());
        let mut prng = krng.child(3);
        for (inst, tour) in instances.iter().zip(tours.iter_mut()) {
            if n > tour.len() {
                continue;
            }
            let p = prng.random_range(0..tour.len());
            *tour = revise_once(inst, tour, n, p, &reviser, &ReviseOptions::default())?.0;
        }
        reports.push(rep);
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::model::{DecodeMode, ModelConfig};

    fn tiny(n: usize) -> ModelConfig {
        ModelConfig { n, embed_dim: 8, heads: 2, layers: 1, ff_dim: 8 }
    }

    #[test]
    fn zero_advantage_gives_zero_gradient() {
        let pol = Policy::init(tiny(6), &mut Rng::new(0)).unwrap();
        let t = sample_stage1_shpp(6, &mut Rng::new(1));
        let p = PathOrder(vec![0, 3, 1, 4, 2, 5]);
        let (loss, g) = surrogate_loss(&pol, &t.raw, &p, &p, 0.0, 0.0).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.is_zero());
    }

    #[test]
    fn unit_advantage_is_the_score_function() {
        let pol = Policy::init(tiny(6), &mut Rng::new(2)).unwrap();
        let t = sample_stage1_shpp(6, &mut Rng::new(3));
        let p = PathOrder(vec![0, 2, 4, 1, 3, 5]);
        let q = PathOrder(vec![0, 1, 2, 3, 4, 5]);
        let (_, g) = surrogate_loss(&pol, &t.raw, &p, &q, 1.0, 1.0).unwrap();
        let mut tape = Tape::new();
        let (f, b) = pol.score_paths(&mut tape, &t.raw, &p, &q).unwrap();
        let s = tape.sum(&[f.logp_var.unwrap(), b.logp_var.unwrap()]);
        assert_eq!(g, tape.backward(s, pol.params.len()));
    }

    #[test]
    fn stage1_sampler_respects_height() {
        let mut r = Rng::new(4);
        for _ in 0..100 {
            let t = sample_stage1_shpp(10, &mut r);
            let top = t.raw.iter().map(|p| p.y).fold(0.0, f64::max);
            assert!(top <= 1.0);
            assert!(t.raw.iter().all(|p| (0.0..=1.0).contains(&p.x)));
        }
    }

    #[test]
    fn training_steps_run_and_change_params() {
        let mut pol = Policy::init(tiny(8), &mut Rng::new(5)).unwrap();
        let before = pol.params.clone();
        let cfg = TrainConfig { lr: 1e-3, batch: 4, epochs: 1, steps_per_epoch: 3, ..Default::default() };
        let rep = train_stage1(&mut pol, &cfg, &Rng::new(6), None).unwrap();
        assert_eq!(rep.steps, 3);
        assert_ne!(before, pol.params);
        assert!(rep.history.iter().all(|s| s.mean_sampled.is_finite()));
    }

    #[test]
    fn stage2_zero_steps_keeps_params() {
        let mut pols = vec![
            Policy::init(tiny(10), &mut Rng::new(7)).unwrap(),
            Policy::init(tiny(5), &mut Rng::new(8)).unwrap(),
        ];
        let before: Vec<_> = pols.iter().map(|p| p.params.clone()).collect();
        let cfg = Stage2Config { tsp_n: 40, instances: 2, steps: 0, ..Default::default() };
        let reps = curriculum_stage2(&mut pols, &cfg, &Rng::new(9)).unwrap();
        assert_eq!(reps.len(), 2);
        assert_eq!(reps[0].tasks, 8);
        for (p, b) in pols.iter().zip(before) {
            assert_eq!(p.params, b);
        }
        let mut t = Tape::new();
        assert!(pols[1]
            .decode_bidirectional(&mut t, &sample_stage1_shpp(5, &mut Rng::new(1)).raw, DecodeMode::Greedy, None, false)
            .is_ok());
    }
}
