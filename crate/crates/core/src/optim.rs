//! Adam / AdamW and learning-rate schedules.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Grads, Matrix, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay; 0 gives plain Adam.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub cfg: AdamConfig,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    t: u64,
}

impl Adam {
    pub fn new(params: &ParamSet, cfg: AdamConfig) -> Self {
        let zeros = || params.values.iter().map(|p| Matrix::zeros(p.rows, p.cols)).collect();
        Adam { cfg, m: zeros(), v: zeros(), t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update at learning rate `lr`. Parameters without a gradient are
    /// still decayed.
    pub fn step(&mut self, params: &mut ParamSet, grads: &Grads, lr: f64) {
        self.t += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        for (i, p) in params.values.iter_mut().enumerate() {
            let mut w = (**p).clone();
            if c.weight_decay > 0.0 {
                let f = 1.0 - lr * c.weight_decay;
                w.data.iter_mut().for_each(|x| *x *= f);
            }
            if let Some(g) = &grads.0[i] {
                let (m, v) = (&mut self.m[i], &mut self.v[i]);
                for k in 0..w.data.len() {
                    let gk = g.data[k];
                    m.data[k] = c.beta1 * m.data[k] + (1.0 - c.beta1) * gk;
                    v.data[k] = c.beta2 * v.data[k] + (1.0 - c.beta2) * gk * gk;
                    let mh = m.data[k] / bc1;
                    let vh = v.data[k] / bc2;
                    w.data[k] -= lr * mh / (vh.sqrt() + c.eps);
                }
            }
            *p = Arc::new(w);
        }
    }
}

/// Cosine annealing from `lr` to `lr_min` over `total` steps.
pub fn cosine_lr(lr: f64, lr_min: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return lr;
    }
    let frac = (step.min(total) as f64) / total as f64;
    lr_min + 0.5 * (lr - lr_min) * (1.0 + (std::f64::consts::PI * frac).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_minimises_a_quadratic() {
        let mut ps = ParamSet::default();
        ps.push("x", Matrix::row_vector(vec![3.0, -2.0]));
        let mut opt = Adam::new(&ps, AdamConfig { lr: 0.1, ..Default::default() });
        for _ in 0..500 {
            let g = Grads(vec![Some(Matrix::row_vector(ps.values[0].data.iter().map(|x| 2.0 * x).collect()))]);
            opt.step(&mut ps, &g, 0.1);
        }
        assert!(ps.values[0].data.iter().all(|x| x.abs() < 1e-2));
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut ps = ParamSet::default();
        ps.push("x", Matrix::scalar(1.0));
        let mut opt = Adam::new(&ps, AdamConfig::default());
        opt.step(&mut ps, &Grads(vec![Some(Matrix::scalar(5.0))]), 0.01);
        assert!((ps.values[0].data[0] - 0.99).abs() < 1e-9);
    }

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(1.0, 0.1, 0, 10), 1.0);
        assert!((cosine_lr(1.0, 0.1, 10, 10) - 0.1).abs() < 1e-12);
        assert!((cosine_lr(1.0, 0.0, 5, 10) - 0.5).abs() < 1e-12);
    }
}
