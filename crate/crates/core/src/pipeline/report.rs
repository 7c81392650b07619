//! Benchmark and stability reports.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GlopError, Result};
use crate::io::ResultRecord;
use crate::pipeline::Glop;
use crate::rng::Rng;
use crate::types::RoutingInstance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub index: usize,
    pub objective: Option<f64>,
    pub time_s: f64,
    pub reference: Option<f64>,
    /// `objective / reference - 1`.
    pub gap: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: String,
    pub config_digest: String,
    pub seed: u64,
    pub rows: Vec<BenchRow>,
    pub solved: usize,
    pub failed: usize,
    pub mean_objective: f64,
    /// Sample standard deviation of the solved objectives.
    pub std_objective: f64,
    pub mean_gap: Option<f64>,
    pub total_time_s: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl BenchReport {
    /// Builds the aggregate fields from `rows`.
    pub fn from_rows(config: String, config_digest: String, seed: u64, rows: Vec<BenchRow>) -> Self {
        let objs: Vec<f64> = rows.iter().filter_map(|r| r.objective).collect();
        let gaps: Vec<f64> = rows.iter().filter_map(|r| r.gap).collect();
        let (mean_objective, std_objective) = mean_std(&objs);
        BenchReport {
            config,
            config_digest,
            seed,
            solved: objs.len(),
            failed: rows.len() - objs.len(),
            mean_objective,
            std_objective,
            mean_gap: (!gaps.is_empty()).then(|| mean_std(&gaps).0),
            total_time_s: rows.iter().map(|r| r.time_s).sum(),
            rows,
        }
    }

    /// Copy with every timing zeroed, for run-to-run comparisons.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        r.total_time_s = 0.0;
        r.rows.iter_mut().for_each(|row| row.time_s = 0.0);
        r
    }

    pub fn records(&self, method: &str) -> Vec<ResultRecord> {
        self.rows
            .iter()
            .filter_map(|r| {
                r.objective.map(|objective| ResultRecord {
                    id: format!("{}", r.index),
                    method: method.to_string(),
                    objective,
                    time_s: r.time_s,
                    seed: self.seed,
                    config: self.config_digest.clone(),
                })
            })
            .collect()
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "config      {} ({})", self.config, &self.config_digest[..12.min(self.config_digest.len())]);
        let _ = writeln!(s, "instances   {} solved, {} failed", self.solved, self.failed);
        let _ = writeln!(s, "objective   {:.4} +- {:.4}", self.mean_objective, self.std_objective);
        if let Some(g) = self.mean_gap {
            let _ = writeln!(s, "gap         {:.3}%", 100.0 * g);
        }
        let _ = writeln!(s, "time        {:.2}s", self.total_time_s);
        for r in self.rows.iter().filter(|r| r.error.is_some()) {
            let _ = writeln!(s, "failed #{}: {}", r.index, r.error.as_deref().unwrap_or(""));
        }
        s
    }
}

/// Solves every instance with stream `Rng::new(seed).child(i)`. Failures are
/// recorded per row and do not stop the run.
pub fn bench(instances: &[RoutingInstance], glop: &Glop, references: Option<&[f64]>, seed: u64) -> Result<BenchReport> {
    if let Some(r) = references {
        if r.len() != instances.len() {
            return Err(GlopError::Input(format!(
                "{} reference objectives for {} instances",
                r.len(),
                instances.len()
            )));
        }
    }
    let root = Rng::new(seed);
    let rows = instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| {
            let reference = references.map(|r| r[i]);
            match glop.solve(inst, &root.child(i as u64)) {
                Ok(out) => BenchRow {
                    index: i,
                    objective: Some(out.objective),
                    time_s: out.time_s,
                    reference,
                    gap: reference.filter(|&r| r > 0.0).map(|r| out.objective / r - 1.0),
                    error: None,
                },
                Err(e) => BenchRow { index: i, objective: None, time_s: 0.0, reference, gap: None, error: Some(e.to_string()) },
            }
        })
        .collect();
    Ok(BenchReport::from_rows(glop.config.name.clone(), glop.config.digest(), seed, rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub min: f64,
    pub q1: f64,
    pub mean: f64,
    pub q3: f64,
    pub max: f64,
}

/// Five-number summary with linearly interpolated quartiles.
pub fn quartiles(xs: &[f64]) -> Quartiles {
    assert!(!xs.is_empty(), "quartiles of nothing");
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = p * (v.len() - 1) as f64;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        v[lo] + (h - lo as f64) * (v[hi] - v[lo])
    };
    Quartiles {
        min: v[0],
        q1: q(0.25),
        mean: v.iter().sum::<f64>() / v.len() as f64,
        q3: q(0.75),
        max: v[v.len() - 1],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub runs: usize,
    /// Objective of instance `i` in run `r` at `objectives[r][i]`.
    pub objectives: Vec<Vec<f64>>,
    /// Distribution over instances, one entry per run.
    pub per_run: Vec<Quartiles>,
    /// Distribution over runs, one entry per instance.
    pub per_instance: Vec<Quartiles>,
    /// Mean over instances of the max-min spread across runs.
    pub mean_range: f64,
}

/// Benchmarks with seeds `0..runs`. Every instance must solve in every run.
pub fn stability(instances: &[RoutingInstance], glop: &Glop, runs: usize) -> Result<StabilityReport> {
    if runs < 2 {
        return Err(GlopError::Config("stability needs at least two runs".into()));
    }
    if instances.is_empty() {
        return Err(GlopError::Input("stability needs at least one instance".into()));
    }
    let mut objectives = Vec::with_capacity(runs);
    for r in 0..runs {
        let rep = bench(instances, glop, None, r as u64)?;
        let objs = rep
            .rows
            .iter()
            .map(|row| {
                row.objective.ok_or_else(|| {
                    GlopError::Input(format!("instance {} failed: {}", row.index, row.error.clone().unwrap_or_default()))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        objectives.push(objs);
    }
    let per_run = objectives.iter().map(|o| quartiles(o)).collect();
    let per_instance: Vec<Quartiles> = (0..instances.len())
        .map(|i| quartiles(&objectives.iter().map(|o| o[i]).collect::<Vec<_>>()))
        .collect();
    let mean_range = per_instance.iter().map(|q| q.max - q.min).sum::<f64>() / per_instance.len() as f64;
    Ok(StabilityReport { runs, objectives, per_run, per_instance, mean_range })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{generate, DatasetSpec};
    use crate::pipeline::SolveConfig;
    use crate::revision::{InitMode, OffsetMode};
    use crate::types::ProblemKind;

    fn tsp(n: usize, count: usize) -> Vec<RoutingInstance> {
        generate(&DatasetSpec::new(ProblemKind::Tsp, n, count, 21)).unwrap()
    }

    #[test]
    fn empty_dataset_gives_empty_report() {
        let g = Glop::new(SolveConfig::preset("ri-only").unwrap()).unwrap();
        let r = bench(&[], &g, None, 0).unwrap();
        assert!(r.rows.is_empty());
        assert_eq!(r.solved, 0);
    }

    #[test]
    fn rerun_is_identical_modulo_timings() {
        let g = Glop::new(SolveConfig::preset("tsp500-default").unwrap()).unwrap();
        let data = tsp(60, 4);
        let a = bench(&data, &g, Some(&[5.0; 4]), 3).unwrap();
        let b = bench(&data, &g, Some(&[5.0; 4]), 3).unwrap();
        assert_eq!(a.without_timings(), b.without_timings());
        let g0 = a.rows[0].gap.unwrap();
        assert!((g0 - (a.rows[0].objective.unwrap() / 5.0 - 1.0)).abs() < 1e-15);
        assert_eq!(a.records("glop").len(), 4);
    }

    #[test]
    fn deterministic_config_has_zero_spread() {
        let mut cfg = SolveConfig::preset("tsp500-default").unwrap();
        cfg.tsp.options.init = InitMode::IndexInsertion;
        cfg.tsp.options.offset = OffsetMode::Fixed(0);
        let g = Glop::new(cfg).unwrap();
        let s = stability(&tsp(40, 3), &g, 3).unwrap();
        assert_eq!(s.mean_range, 0.0);
        let q = s.per_run[0];
        let mut v = s.objectives[0].clone();
        v.sort_by(f64::total_cmp);
        assert_eq!((q.min, q.max), (v[0], v[2]));
    }

    #[test]
    fn quartile_values() {
        let q = quartiles(&[4.0, 1.0, 3.0, 2.0, 5.0]);
        assert_eq!((q.min, q.q1, q.mean, q.q3, q.max), (1.0, 2.0, 3.0, 4.0, 5.0));
        assert!(stability(&tsp(10, 1), &Glop::new(SolveConfig::preset("ri-only").unwrap()).unwrap(), 1).is_err());
    }
}
