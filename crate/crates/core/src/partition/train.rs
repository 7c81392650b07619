//! REINFORCE for the partition model with a per-instance mean baseline.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Grads, Matrix, Tape};
use crate::error::{GlopError, Result};
use crate::optim::{cosine_lr, Adam, AdamConfig};
use crate::partition::evaluate::evaluate_partition;
use crate::partition::gnn::{PartitionHeatmap, PartitionModel};
use crate::partition::graph::build_sparse_graph;
use crate::partition::sampler::{sample_partitions, PartitionMode, DEFAULT_VEHICLE_SLACK};
use crate::revision::TspSolver;
use crate::rng::Rng;
use crate::types::RoutingInstance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalTrainConfig {
    pub steps: usize,
    /// Instances per step.
    pub batch: usize,
    /// Sampled partitions per instance.
    pub samples: usize,
    pub lr: f64,
    pub lr_min: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub k: usize,
    pub slack: usize,
}

impl Default for GlobalTrainConfig {
    fn default() -> Self {
        GlobalTrainConfig {
            steps: 200,
            batch: 8,
            samples: 16,
            lr: 1e-3,
            lr_min: 1e-5,
            weight_decay: 1e-4,
            clip_norm: 1.0,
            k: 100,
            slack: DEFAULT_VEHICLE_SLACK,
        }
    }
}

impl GlobalTrainConfig {
    pub fn check(&self) -> Result<()> {
        if self.batch == 0 || self.samples == 0 {
            return Err(GlopError::Config("batch and samples must be positive".into()));
        }
        if !(self.lr > 0.0) || self.lr_min < 0.0 || self.clip_norm <= 0.0 {
            return Err(GlopError::Config("invalid learning rate or clip norm".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalStepStats {
    pub mean_objective: f64,
    pub grad_norm: f64,
    pub lr: f64,
    /// True when the step changed no parameter (zero or non-finite gradient).
    pub skipped: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlobalTrainReport {
    pub steps: usize,
    /// Steps dropped because of a non-finite gradient.
    pub non_finite: usize,
    pub history: Vec<GlobalStepStats>,
    pub elapsed_s: f64,
}

/// REINFORCE gradient for one instance, scaled by `scale`, and the mean
/// sampled objective. Samples use `rng.child(0)`; sub-TSP solves use
/// `rng.child(1).child(m)`.
pub fn instance_gradient(
    model: &PartitionModel,
    instance: &RoutingInstance,
    cfg: &GlobalTrainConfig,
    solver: &TspSolver,
    rng: &Rng,
    scale: f64,
) -> Result<(Grads, f64)> {
    let g = build_sparse_graph(instance, cfg.k)?;
    let mut t = Tape::new();
    let s = model.scores(&mut t, &g)?;
    let hm = PartitionHeatmap::from_scores(&g, &t.value(s).data);
    let samples =
        sample_partitions(&hm, instance, PartitionMode::Sample, cfg.samples, &rng.child(0), cfg.slack, true)?;
    let eval_rng = rng.child(1);
    let objectives: Vec<f64> = samples
        .par_iter()
        .enumerate()
        .map(|(m, smp)| evaluate_partition(instance, &smp.partition, solver, &eval_rng.child(m as u64)))
        .collect::<Result<_>>()?;
    let mean = objectives.iter().sum::<f64>() / objectives.len() as f64;
    let mut seed = vec![0.0; g.n_edges()];
    let mut any = false;
    for (smp, &obj) in samples.iter().zip(&objectives) {
        let adv = obj - mean;
        if adv == 0.0 {
            continue;
        }
        any = true;
        let f = adv * scale / cfg.samples as f64;
        for (o, d) in seed.iter_mut().zip(smp.score_grad.as_ref().expect("tracked")) {
            *o += f * d;
        }
    }
    let grads = if any {
        t.backward_with_seed(s, Matrix::from_vec(g.n_edges(), 1, seed), model.params.len())
    } else {
        Grads(vec![None; model.params.len()])
    };
    Ok((grads, mean))
}

/// Trains on `pool`, cycling through it `cfg.batch` instances at a time.
/// Instance `b` of step `t` uses `rng.child(t).child(b)`.
pub fn train_global(
    model: &mut PartitionModel,
    pool: &[RoutingInstance],
    cfg: &GlobalTrainConfig,
    solver: &TspSolver,
    rng: &Rng,
) -> Result<GlobalTrainReport> {
    cfg.check()?;
    if pool.is_empty() {
        return Err(GlopError::Config("empty training pool".into()));
    }
    let start = Instant::now();
    let mut adam = Adam::new(
        &model.params,
        AdamConfig { lr: cfg.lr, weight_decay: cfg.weight_decay, ..AdamConfig::default() },
    );
    let mut history = Vec::with_capacity(cfg.steps);
    let mut non_finite = 0;
    let scale = 1.0 / cfg.batch as f64;
    for step in 0..cfg.steps {
        let step_rng = rng.child(step as u64);
        let parts: Vec<(Grads, f64)> = (0..cfg.batch)
            .into_par_iter()
            .map(|b| {
                let inst = &pool[(step * cfg.batch + b) % pool.len()];
                instance_gradient(model, inst, cfg, solver, &step_rng.child(b as u64), scale)
            })
            .collect::<Result<_>>()?;
        let mut grads = Grads::zeros_like(&model.params);
        let mut mean_objective = 0.0;
        for (g, m) in &parts {
            grads.accumulate(g);
            mean_objective += m / cfg.batch as f64;
        }
        let lr = cosine_lr(cfg.lr, cfg.lr_min, step, cfg.steps);
        let finite = grads.is_finite();
        let skipped = !finite || grads.is_zero();
        let grad_norm = if finite { grads.clip(cfg.clip_norm) } else { f64::NAN };
        if !finite {
            non_finite += 1;
        }
        if !skipped {
            adam.step(&mut model.params, &grads, lr);
        }
        history.push(GlobalStepStats { mean_objective, grad_norm, lr, skipped });
    }
    Ok(GlobalTrainReport {
        steps: cfg.steps,
        non_finite,
        history,
        elapsed_s: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{generate, DatasetSpec};
    use crate::partition::gnn::GnnConfig;
    use crate::revision::TspSolverConfig;
    use crate::types::ProblemKind;

    fn setup() -> (PartitionModel, Vec<RoutingInstance>, TspSolver) {
        let m = PartitionModel::init(
            GnnConfig { kind: ProblemKind::Cvrp, embed_dim: 8, layers: 1 },
            &mut Rng::new(0),
        )
        .unwrap();
        let pool = generate(&DatasetSpec::new(ProblemKind::Cvrp, 10, 4, 1).with_capacity(20.0)).unwrap();
        (m, pool, TspSolver::new(TspSolverConfig::default()).unwrap())
    }

    #[test]
    fn single_sample_gives_no_update() {
        let (mut m, pool, solver) = setup();
        let before = m.params.clone();
        let cfg = GlobalTrainConfig { steps: 3, batch: 2, samples: 1, k: 5, ..Default::default() };
        let rep = train_global(&mut m, &pool, &cfg, &solver, &Rng::new(1)).unwrap();
        assert!(rep.history.iter().all(|h| h.skipped));
        assert_eq!(m.params, before);
    }

    #[test]
    fn several_samples_move_the_parameters() {
        let (mut m, pool, solver) = setup();
        let before = m.params.clone();
        let cfg = GlobalTrainConfig { steps: 2, batch: 2, samples: 8, k: 5, ..Default::default() };
        let rep = train_global(&mut m, &pool, &cfg, &solver, &Rng::new(1)).unwrap();
        assert_eq!(rep.non_finite, 0);
        assert_ne!(m.params, before);
        assert!(rep.history.iter().all(|h| h.mean_objective.is_finite()));
    }

    #[test]
    fn training_is_deterministic() {
        let (m0, pool, solver) = setup();
        let cfg = GlobalTrainConfig { steps: 2, batch: 2, samples: 4, k: 5, ..Default::default() };
        let run = || {
            let mut m = m0.clone();
            train_global(&mut m, &pool, &cfg, &solver, &Rng::new(7)).unwrap();
            m.params
        };
        assert_eq!(run(), run());
    }
}
