use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Duration;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use glop_core::io::{default_k, generate as generate_dataset, read_dataset, write_jsonl, DatasetSpec, ParseOptions};
use glop_core::neural::{curriculum_stage2, load_policy, save_policy, train_stage1, ModelConfig, Policy, Stage2Config, TrainConfig};
use glop_core::partition::{load_model, save_model, train_global, GlobalTrainConfig, GnnConfig};
use glop_core::pipeline::{quartiles, stability as run_stability, BenchReport, BenchRow};
use glop_core::revision::{InitMode, StageSpec};
use glop_core::shpp::{brute_force_shpp, held_karp_cycle, held_karp_shpp, HELD_KARP_MAX};
use glop_core::task::Augment;
use glop_core::{
    EdgeWeights, Glop, GlopError, PartitionMode, PartitionModel, ProblemKind, Rng, RoutingInstance, ShppTask,
    SolveConfig, TspSolver, TspSolverConfig,
};

use crate::{
    AugmentArg, GenerateArgs, InitArg, ModeArg, OracleArgs, OracleMode, OracleSolver, SolveArgs, StabilityArgs,
    TrainPartitionArgs, TrainReviserArgs,
};

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    GlopError::Config(msg.into()).into()
}

/// Stdout, or a file when `path` is given.
fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn emit<T: Serialize>(path: Option<&Path>, items: &[T]) -> Result<()> {
    let mut w = sink(path)?;
    write_jsonl(&mut w, items)?;
    w.flush()?;
    Ok(())
}

pub fn generate(a: GenerateArgs) -> Result<()> {
    let mut spec = DatasetSpec::new(a.problem, a.n, a.count, a.seed);
    if let Some(c) = a.capacity {
        spec = spec.with_capacity(c);
    }
    if let Some(kn) = a.kn {
        spec = spec.with_kn(kn);
    }
    let insts = generate_dataset(&spec)?;
    emit(a.out.as_deref(), &insts)?;
    eprintln!("generated {} {} instances with {} nodes (seed {})", insts.len(), a.problem, a.n, a.seed);
    Ok(())
}

fn default_preset(kind: ProblemKind, n: usize, mode: Option<ModeArg>) -> &'static str {
    match kind {
        ProblemKind::Tsp => match n {
            0..=200 => "tsp100-default",
            201..=700 => "tsp500-default",
            701..=5000 => "tsp1k-default",
            5001..=50_000 => "tsp10k-default",
            _ => "tsp100k-default",
        },
        ProblemKind::Cvrp => match n {
            0..=1500 => "cvrp1k-default",
            1501..=3500 => "cvrp2k-default",
            3501..=6000 => "cvrp5k-default",
            _ => "cvrp7k-default",
        },
        ProblemKind::Pctsp => match mode {
            Some(ModeArg::Sample) => "pctsp-sample",
            _ => "pctsp-greedy",
        },
    }
}

/// Preset or config file, then command-line overrides.
pub fn build_config(a: &SolveArgs, kind: ProblemKind, n: usize) -> Result<SolveConfig> {
    let mut c = match (&a.config, &a.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?
        }
        (None, Some(p)) => SolveConfig::preset(p)?,
        (None, None) => SolveConfig::preset(default_preset(kind, n, a.mode))?,
    };
    if c.kind != kind {
        return Err(config_err(format!("configuration {} is for {}, the data is {kind}", c.name, c.kind)));
    }
    let pick = |names: &[String], i: usize, size: usize| -> String {
        match names.len() {
            0 if size <= HELD_KARP_MAX => "dp".into(),
            0 => "2opt".into(),
            1 => names[0].clone(),
            _ => names[i].clone(),
        }
    };
    if !a.rs.is_empty() {
        if a.iters.len() != a.rs.len() {
            return Err(config_err("--iters needs one count per --rs size"));
        }
        if a.reviser.len() > 1 && a.reviser.len() != a.rs.len() {
            return Err(config_err("--reviser takes one name or one per --rs size"));
        }
        c.tsp.stages = a
            .rs
            .iter()
            .zip(&a.iters)
            .enumerate()
            .map(|(i, (&size, &iters))| StageSpec::new(size, iters, &pick(&a.reviser, i, size)))
            .collect();
    } else if !a.reviser.is_empty() {
        if a.reviser.len() > 1 && a.reviser.len() != c.tsp.stages.len() {
            return Err(config_err(format!("--reviser takes one name or {} names", c.tsp.stages.len())));
        }
        for (i, s) in c.tsp.stages.iter_mut().enumerate() {
            s.reviser = pick(&a.reviser, i, s.size);
        }
    }
    if let Some(w) = a.w {
        c.tsp.w = w;
    }
    if let Some(init) = a.init {
        c.tsp.options.init = match init {
            InitArg::RandomInsertion => InitMode::RandomInsertion,
            InitArg::IndexInsertion => InitMode::IndexInsertion,
        };
    }
    if let Some(aug) = a.augment {
        c.tsp.options.revise.augment = match aug {
            AugmentArg::None => Augment::None,
            AugmentArg::X2 => Augment::X2,
            AugmentArg::X4 => Augment::X4,
        };
    }
    if let Some(b) = a.batch_size {
        c.tsp.options.revise.batch_size = b;
    }
    if let Some(m) = a.mode {
        c.partition_mode = match m {
            ModeArg::Greedy => PartitionMode::Greedy,
            ModeArg::Sample => PartitionMode::Sample,
        };
        if m == ModeArg::Sample && c.num_samples == 1 && a.num_samples.is_none() {
            c.num_samples = 10;
        }
    }
    if let Some(s) = a.num_samples {
        c.num_samples = s;
    }
    if let Some(m) = &a.model {
        c.partition_model = Some(m.display().to_string());
    }
    if a.k.is_some() {
        c.k = a.k;
    }
    if a.time_budget.is_some() {
        c.time_budget_s = a.time_budget;
    }
    c.check()?;
    Ok(c)
}

/// One objective per non-empty line: a bare number or a JSON object with
/// an `objective` field.
fn read_references(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            if let Ok(x) = l.trim().parse::<f64>() {
                return Ok(x);
            }
            let v: serde_json::Value = serde_json::from_str(l)
                .map_err(|e| GlopError::Input(format!("{} line {}: {e}", path.display(), i + 1)))?;
            v.get("objective").and_then(|o| o.as_f64()).ok_or_else(|| {
                GlopError::Input(format!("{} line {}: no objective", path.display(), i + 1)).into()
            })
        })
        .collect()
}

fn load(a: &SolveArgs) -> Result<Vec<RoutingInstance>> {
    let opts = ParseOptions { normalize: a.normalize, ..Default::default() };
    read_dataset(&a.input, opts).with_context(|| format!("loading {}", a.input.display()))
}

fn dataset_kind(insts: &[RoutingInstance], want: Option<ProblemKind>) -> Result<ProblemKind> {
    let kind = want.or_else(|| insts.first().map(|i| i.kind)).unwrap_or(ProblemKind::Tsp);
    if let Some(i) = insts.iter().position(|i| i.kind != kind) {
        return Err(config_err(format!("instance {i} is {}, expected {kind}", insts[i].kind)));
    }
    Ok(kind)
}

pub fn solve(a: SolveArgs, want: Option<ProblemKind>) -> Result<()> {
    let insts = load(&a)?;
    let kind = dataset_kind(&insts, want)?;
    let n = insts.first().map_or(0, |i| i.len());
    let config = build_config(&a, kind, n)?;
    if a.dry_run {
        println!("{}", serde_json::to_string_pretty(&config)?);
        return Ok(());
    }
    let refs = a.reference.as_deref().map(read_references).transpose()?;
    if let Some(r) = &refs {
        if r.len() != insts.len() {
            return Err(GlopError::Input(format!("{} references for {} instances", r.len(), insts.len())).into());
        }
    }
    let glop = Glop::new(config)?;
    let root = Rng::new(a.seed);
    // Same per-instance streams as `glop_core::pipeline::bench`.
    let outcomes: Vec<_> = insts.par_iter().enumerate().map(|(i, inst)| glop.solve(inst, &root.child(i as u64))).collect();

    let mut rows = Vec::with_capacity(insts.len());
    let mut solutions = Vec::new();
    let mut first_err = None;
    for (i, out) in outcomes.into_iter().enumerate() {
        let reference = refs.as_ref().map(|r| r[i]);
        match out {
            Ok(o) => {
                rows.push(BenchRow {
                    index: i,
                    objective: Some(o.objective),
                    time_s: o.time_s,
                    reference,
                    gap: reference.filter(|&r| r > 0.0).map(|r| o.objective / r - 1.0),
                    error: None,
                });
                solutions.push(json!({ "id": i.to_string(), "objective": o.objective, "solution": o.solution }));
            }
            Err(e) => {
                rows.push(BenchRow { index: i, objective: None, time_s: 0.0, reference, gap: None, error: Some(e.to_string()) });
                first_err.get_or_insert(e);
            }
        }
    }
    let report = BenchReport::from_rows(glop.config.name.clone(), glop.config.digest(), a.seed, rows);
    emit(a.out.as_deref(), &report.records(&glop.config.name))?;
    if let Some(p) = &a.solutions {
        emit(Some(p), &solutions)?;
    }
    if let Some(p) = &a.report {
        std::fs::write(p, serde_json::to_string_pretty(&report)?)?;
    }
    eprint!("{}", report.summary());
    match first_err {
        Some(e) => Err(anyhow::Error::from(e).context(format!("{} of {} instances failed", report.failed, insts.len()))),
        None => Ok(()),
    }
}

pub fn stability(a: StabilityArgs) -> Result<()> {
    let insts = load(&a.solve)?;
    let kind = dataset_kind(&insts, None)?;
    let n = insts.first().map_or(0, |i| i.len());
    let glop = Glop::new(build_config(&a.solve, kind, n)?)?;
    let rep = run_stability(&insts, &glop, a.runs)?;
    let lines: Vec<_> = rep
        .objectives
        .iter()
        .zip(&rep.per_run)
        .enumerate()
        .map(|(r, (objs, q))| json!({ "run": r, "seed": r, "objectives": objs, "quartiles": q }))
        .collect();
    emit(a.solve.out.as_deref(), &lines)?;
    eprintln!("{:>4} {:>10} {:>10} {:>10} {:>10} {:>10}", "run", "min", "q1", "mean", "q3", "max");
    for (r, q) in rep.per_run.iter().enumerate() {
        eprintln!("{r:>4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4}", q.min, q.q1, q.mean, q.q3, q.max);
    }
    let means: Vec<f64> = rep.per_run.iter().map(|q| q.mean).collect();
    let q = quartiles(&means);
    eprintln!("run means span {:.4}..{:.4}; mean per-instance range {:.4}", q.min, q.max, rep.mean_range);
    Ok(())
}

#[derive(Serialize)]
struct HistoryLine<T: Serialize> {
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    step: usize,
    #[serde(flatten)]
    stats: T,
}

pub fn train_reviser(a: TrainReviserArgs) -> Result<()> {
    let root = Rng::new(a.seed);
    if a.stage == 1 {
        if a.out.len() != 1 || a.init.len() > 1 {
            return Err(config_err("stage one trains a single reviser: give one --out and at most one --init"));
        }
        let mut policy = match a.init.first() {
            Some(p) => load_policy(p)?,
            None => {
                let cfg = if a.full_scale { ModelConfig::full(a.n) } else { ModelConfig::toy(a.n) };
                Policy::init(cfg, &mut root.child(0))?
            }
        };
        let cfg = TrainConfig {
            lr: a.lr,
            batch: a.batch,
            epochs: a.epochs,
            steps_per_epoch: a.steps_per_epoch,
            clip_norm: a.clip_norm,
            lr_decay: a.lr_decay,
        };
        let rep = train_stage1(&mut policy, &cfg, &root.child(1), a.seconds.map(Duration::from_secs))?;
        save_policy(&policy, &a.out[0])?;
        let lines: Vec<_> =
            rep.history.iter().enumerate().map(|(step, s)| HistoryLine { n: None, step, stats: *s }).collect();
        emit(a.history.as_deref(), &lines)?;
        let head = window_mean(&rep.history, true);
        let tail = window_mean(&rep.history, false);
        eprintln!(
            "reviser n={} trained {} steps ({} skipped) in {:.1}s; sampled length {head:.4} -> {tail:.4}; saved {}",
            policy.cfg.n,
            rep.steps,
            rep.skipped,
            rep.elapsed_s,
            a.out[0].display()
        );
        return Ok(());
    }
    if a.init.is_empty() || a.init.len() != a.out.len() {
        return Err(config_err("stage two needs --init checkpoints and one --out per checkpoint"));
    }
    let mut policies = a.init.iter().map(load_policy).collect::<glop_core::Result<Vec<_>>>()?;
    let cfg = Stage2Config {
        tsp_n: a.tsp_n,
        instances: a.instances,
        steps: a.epochs * a.steps_per_epoch,
        batch: a.batch,
        lr: a.lr,
        lr_decay: a.lr_decay,
        clip_norm: a.clip_norm,
    };
    let reports = curriculum_stage2(&mut policies, &cfg, &root)?;
    for (p, out) in policies.iter().zip(&a.out) {
        save_policy(p, out)?;
    }
    let lines: Vec<_> = reports
        .iter()
        .flat_map(|r| r.history.iter().enumerate().map(|(step, s)| HistoryLine { n: Some(r.n), step, stats: *s }))
        .collect();
    emit(a.history.as_deref(), &lines)?;
    for r in &reports {
        eprintln!("reviser n={}: {} segments, {} steps", r.n, r.tasks, r.history.len());
    }
    Ok(())
}

/// Mean sampled length over the first or last ten steps.
fn window_mean(h: &[glop_core::neural::StepStats], head: bool) -> f64 {
    let w = h.len().min(10);
    let s = if head { &h[..w] } else { &h[h.len() - w..] };
    s.iter().map(|x| x.mean_sampled).sum::<f64>() / w.max(1) as f64
}

pub fn train_partition(a: TrainPartitionArgs) -> Result<()> {
    if a.problem == ProblemKind::Tsp {
        return Err(config_err("partition models are for cvrp and pctsp"));
    }
    let root = Rng::new(a.seed);
    let cfg = GlobalTrainConfig {
        steps: a.steps,
        batch: a.batch,
        samples: a.samples,
        lr: a.lr,
        k: a.k.unwrap_or_else(|| default_k(a.problem, a.n)),
        ..Default::default()
    };
    cfg.check()?;
    let mut spec = DatasetSpec::new(a.problem, a.n, a.pool.unwrap_or(a.steps * a.batch).max(1), a.seed);
    if let Some(c) = a.capacity {
        spec = spec.with_capacity(c);
    }
    let pool = generate_dataset(&spec)?;
    let mut model = match &a.init {
        Some(p) => load_model(p)?,
        None => {
            let g = if a.full_scale { GnnConfig::full(a.problem) } else { GnnConfig::toy(a.problem) };
            PartitionModel::init(g, &mut root.child(0))?
        }
    };
    if model.cfg.kind != a.problem {
        return Err(config_err(format!("checkpoint is a {} model", model.cfg.kind)));
    }
    let solver = TspSolver::new(TspSolverConfig::default())?;
    let rep = train_global(&mut model, &pool, &cfg, &solver, &root.child(1))?;
    save_model(&model, &a.out)?;
    let lines: Vec<_> = rep.history.iter().enumerate().map(|(step, s)| HistoryLine { n: None, step, stats: *s }).collect();
    emit(a.history.as_deref(), &lines)?;
    let first = rep.history.first().map_or(f64::NAN, |s| s.mean_objective);
    let last = rep.history.last().map_or(f64::NAN, |s| s.mean_objective);
    eprintln!(
        "{} partition model trained {} steps in {:.1}s ({} non-finite); sampled objective {first:.4} -> {last:.4}; saved {}",
        a.problem,
        rep.steps,
        rep.elapsed_s,
        rep.non_finite,
        a.out.display()
    );
    Ok(())
}

pub fn oracle(a: OracleArgs) -> Result<()> {
    let insts = read_dataset(&a.input, ParseOptions::default())?;
    let lines = insts
        .iter()
        .enumerate()
        .map(|(i, inst)| -> Result<serde_json::Value> {
            let (order, length) = match a.mode {
                OracleMode::Path => {
                    if !matches!(inst.weights, EdgeWeights::Euclidean) {
                        return Err(GlopError::Unsupported("path oracle needs plain Euclidean coordinates".into()).into());
                    }
                    let task = ShppTask::from_points(inst.coords.clone());
                    let order = match a.solver {
                        OracleSolver::Dp => held_karp_shpp(&task)?,
                        OracleSolver::Bf => brute_force_shpp(&task)?,
                    };
                    let len = task.path_length(order.order());
                    (order.0, len)
                }
                OracleMode::Cycle => {
                    if matches!(a.solver, OracleSolver::Bf) {
                        return Err(GlopError::Unsupported("brute force solves open paths only".into()).into());
                    }
                    let order = held_karp_cycle(inst.len(), &|x, y| inst.dist(x, y))?;
                    let len = glop_core::cycle_length(inst, &order);
                    (order, len)
                }
            };
            Ok(json!({ "id": i.to_string(), "order": order, "length": length }))
        })
        .collect::<Result<Vec<_>>>()?;
    emit(a.out.as_deref(), &lines)?;
    eprintln!("solved {} instances exactly", lines.len());
    Ok(())
}
