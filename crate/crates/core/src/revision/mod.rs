//! Tour revision: cut a tour into fixed-size SHPP segments, let a reviser
//! propose better interiors, keep strict improvements and stitch the tour
//! back together, shifting the cut point between rounds.

use std::sync::Arc;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GlopError, Result};
use crate::insertion::{insertion_tour, random_insertion_multi};
use crate::rng::Rng;
use crate::shpp::Reviser;
use crate::task::{augment_with, transform, Augment, ShppTask};
use crate::types::{cycle_length, PathOrder, RoutingInstance, Tour};

/// A proposal must beat the current path by more than this to be accepted.
pub const ACCEPT_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage {
    pub size: usize,
    pub iters: usize,
}

/// Reviser sizes, iterations per size and the number of initial tours.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevisionSchedule {
    pub stages: Vec<Stage>,
    pub w: usize,
}

impl RevisionSchedule {
    pub fn new(sizes: &[usize], iters: &[usize], w: usize) -> Result<Self> {
        if sizes.len() != iters.len() {
            return Err(GlopError::Config(format!(
                "{} sizes but {} iteration counts",
                sizes.len(),
                iters.len()
            )));
        }
        let stages = sizes.iter().zip(iters).map(|(&size, &iters)| Stage { size, iters }).collect();
        let s = RevisionSchedule { stages, w };
        s.check()?;
        Ok(s)
    }

    /// Zero iterations are accepted and simply skip the size.
    pub fn check(&self) -> Result<()> {
        if self.w < 1 {
            return Err(GlopError::Config("W must be at least 1".into()));
        }
        for (i, s) in self.stages.iter().enumerate() {
            if s.size < 4 {
                return Err(GlopError::Config(format!("reviser size {} is below 4", s.size)));
            }
            if self.stages[..i].iter().any(|t| t.size == s.size) {
                return Err(GlopError::Config(format!("reviser size {} repeated", s.size)));
            }
        }
        Ok(())
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.stages.iter().map(|s| s.size).collect()
    }
}

/// A tour cut into `tasks.len()` segments of `n` nodes starting at tour
/// position `p`, plus the untouched tail.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub n: usize,
    pub p: usize,
    pub tasks: Vec<ShppTask>,
    pub tail: Vec<usize>,
}

pub fn decompose(instance: &RoutingInstance, tour: &Tour, n: usize, p: usize) -> Result<Decomposition> {
    decompose_with_id(instance, tour, n, p, 0)
}

fn decompose_with_id(
    instance: &RoutingInstance,
    tour: &Tour,
    n: usize,
    p: usize,
    tour_id: usize,
) -> Result<Decomposition> {
    let order = tour.order();
    let big_n = order.len();
    if n > big_n {
        return Err(GlopError::SizeSkipped { size: n, len: big_n });
    }
    if n < 2 {
        return Err(GlopError::Config(format!("segment size {n} is below 2")));
    }
    if p >= big_n {
        return Err(GlopError::Config(format!("offset {p} outside tour of {big_n}")));
    }
    let k = big_n / n;
    let at = |j: usize| order[(p + j) % big_n];
    let tasks = (0..k)
        .map(|s| {
            let nodes = (s * n..(s + 1) * n).map(at).collect();
            ShppTask::from_instance(instance, nodes).with_ids(tour_id, s)
        })
        .collect();
    let tail = (k * n..big_n).map(at).collect();
    Ok(Decomposition { n, p, tasks, tail })
}

/// Writes the (possibly reordered) segments back at their original tour
/// positions. Each segment must keep its endpoints and node set.
pub fn compose(tour: &Tour, dec: &Decomposition) -> Result<Tour> {
    let old = tour.order();
    let big_n = old.len();
    let n = dec.n;
    if dec.tasks.len() * n + dec.tail.len() != big_n {
        return Err(GlopError::Internal("decomposition does not cover the tour".into()));
    }
    let mut new = old.to_vec();
    let mut seen = vec![false; big_n];
    for (s, task) in dec.tasks.iter().enumerate() {
        if task.segment != s || task.len() != n {
            return Err(GlopError::Internal(format!("segment {s} out of place")));
        }
        let first = old[(dec.p + s * n) % big_n];
        let last = old[(dec.p + s * n + n - 1) % big_n];
        if task.nodes[0] != first || task.nodes[n - 1] != last {
            return Err(GlopError::Internal(format!("segment {s} endpoints moved")));
        }
        for (j, &v) in task.nodes.iter().enumerate() {
            new[(dec.p + s * n + j) % big_n] = v;
        }
    }
    for (j, &v) in dec.tail.iter().enumerate() {
        if old[(dec.p + dec.tasks.len() * n + j) % big_n] != v {
            return Err(GlopError::Internal("tail changed".into()));
        }
    }
    for &v in &new {
        if v >= big_n || std::mem::replace(&mut seen[v], true) {
            return Err(GlopError::Internal("composed tour is not a permutation".into()));
        }
    }
    Ok(Tour(new))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReviseOptions {
    pub augment: Augment,
    /// Tasks sent to the reviser per call; bounds memory, not results.
    pub batch_size: usize,
}

impl Default for ReviseOptions {
    fn default() -> Self {
        ReviseOptions { augment: Augment::X4, batch_size: 1024 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundStats {
    pub rounds: usize,
    pub tasks: usize,
    pub improved: usize,
    pub failures: usize,
    pub skipped: usize,
    /// Total length removed.
    pub gain: f64,
}

impl RoundStats {
    pub fn add(&mut self, o: &RoundStats) {
        self.rounds += o.rounds;
        self.tasks += o.tasks;
        self.improved += o.improved;
        self.failures += o.failures;
        self.skipped += o.skipped;
        self.gain += o.gain;
    }
}

/// Asks the reviser for every task (and its flip variants when the reviser
/// reads coordinates) and keeps a proposal only if it is strictly shorter in
/// the raw metric.
pub fn reconstruct_batch(
    tasks: &[ShppTask],
    reviser: &dyn Reviser,
    opts: &ReviseOptions,
) -> (Vec<ShppTask>, RoundStats) {
    let reads = reviser.info().reads_coords;
    let mut out = Vec::with_capacity(tasks.len());
    let mut stats = RoundStats { rounds: 1, tasks: tasks.len(), ..Default::default() };
    for chunk in tasks.chunks(opts.batch_size.max(1)) {
        // variants[i] holds the inputs for chunk[i]; None marks a skip.
        let variants: Vec<Result<Vec<ShppTask>>> = chunk
            .par_iter()
            .map(|t| {
                if !reads {
                    return Ok(vec![t.clone()]);
                }
                transform(t).map(|tt| augment_with(&tt, opts.augment))
            })
            .collect();
        let flat: Vec<ShppTask> =
            variants.iter().filter_map(|v| v.as_ref().ok()).flatten().cloned().collect();
        let mut proposals = reviser.solve_batch(&flat).into_iter();
        for (task, v) in chunk.iter().zip(&variants) {
            let v = match v {
                Ok(v) => v,
                Err(GlopError::Degenerate) => {
                    stats.skipped += 1;
                    out.push(task.clone());
                    continue;
                }
                Err(_) => {
                    stats.failures += 1;
                    out.push(task.clone());
                    continue;
                }
            };
            let mut best: Option<(f64, PathOrder)> = None;
            let mut failed = false;
            for _ in 0..v.len() {
                match proposals.next() {
                    Some(Ok(p)) if p.check(task.len()).is_ok() => {
                        let len = task.path_length(p.order());
                        if best.as_ref().is_none_or(|(b, _)| len < *b) {
                            best = Some((len, p));
                        }
                    }
                    _ => failed = true,
                }
            }
            if failed {
                stats.failures += 1;
            }
            match best {
                Some((len, p)) if len < task.length - ACCEPT_SLACK => {
                    stats.improved += 1;
                    stats.gain += task.length - len;
                    out.push(task.reordered(&p));
                }
                _ => out.push(task.clone()),
            }
        }
    }
    (out, stats)
}

/// One decompose, reconstruct, compose round.
pub fn revise_once(
    instance: &RoutingInstance,
    tour: &Tour,
    n: usize,
    p: usize,
    reviser: &dyn Reviser,
    opts: &ReviseOptions,
) -> Result<(Tour, RoundStats)> {
    let mut dec = decompose(instance, tour, n, p)?;
    let (tasks, stats) = reconstruct_batch(&dec.tasks, reviser, opts);
    dec.tasks = tasks;
    Ok((compose(tour, &dec)?, stats))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffsetMode {
    /// Uniform start offset for every size phase.
    #[default]
    Random,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    #[default]
    RandomInsertion,
    /// Insertion in node-index order; deterministic.
    IndexInsertion,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SolveOptions {
    pub revise: ReviseOptions,
    pub offset: OffsetMode,
    pub init: InitMode,
    /// Revision rounds stop once this instant has passed; the tour so far is kept.
    #[serde(skip)]
    pub deadline: Option<std::time::Instant>,
}

#[derive(Debug, Clone)]
pub struct TspSolution {
    pub tour: Tour,
    pub length: f64,
    /// Index of the winning candidate among the W initial tours.
    pub chosen: usize,
    pub initial_lengths: Vec<f64>,
    pub final_lengths: Vec<f64>,
    pub stats: RoundStats,
}

fn check_revisers(
    instance: &RoutingInstance,
    schedule: &RevisionSchedule,
    revisers: &[Arc<dyn Reviser>],
) -> Result<()> {
    schedule.check()?;
    if revisers.len() != schedule.stages.len() {
        return Err(GlopError::Config(format!(
            "{} revisers for {} sizes",
            revisers.len(),
            schedule.stages.len()
        )));
    }
    for (s, r) in schedule.stages.iter().zip(revisers) {
        let info = r.info();
        if info.max_size < s.size {
            return Err(GlopError::Config(format!(
                "reviser {} handles at most {} nodes, schedule asks for {}",
                info.name, info.max_size, s.size
            )));
        }
        if !instance.is_symmetric() && !info.supports_asymmetric {
            return Err(GlopError::Config(format!(
                "reviser {} does not support asymmetric instances",
                info.name
            )));
        }
    }
    Ok(())
}

/// Runs every size phase on one tour. Sizes larger than the tour are skipped.
pub fn improve_tour(
    instance: &RoutingInstance,
    tour: Tour,
    schedule: &RevisionSchedule,
    revisers: &[Arc<dyn Reviser>],
    opts: &SolveOptions,
    rng: &mut Rng,
) -> Result<(Tour, RoundStats)> {
    check_revisers(instance, schedule, revisers)?;
    let big_n = tour.len();
    let mut tour = tour;
    let mut len = cycle_length(instance, tour.order());
    let mut stats = RoundStats::default();
    for (stage, reviser) in schedule.stages.iter().zip(revisers) {
        // The offset is drawn even for skipped phases so that the stream
        // consumed per phase does not depend on the tour length.
        let draw: usize = rng.random_range(0..usize::MAX);
        if stage.iters == 0 || stage.size > big_n {
            continue;
        }
        let mut p = match opts.offset {
            OffsetMode::Random => draw % big_n,
            OffsetMode::Fixed(q) => q % big_n,
        };
        let shift = (stage.size / stage.iters).max(1);
        for _ in 0..stage.iters {
            if opts.deadline.is_some_and(|d| std::time::Instant::now() >= d) {
                return Ok((tour, stats));
            }
            let (next, st) = revise_once(instance, &tour, stage.size, p, reviser.as_ref(), &opts.revise)?;
            let next_len = cycle_length(instance, next.order());
            if next_len > len + 1e-9 * len.max(1.0) {
                return Err(GlopError::Internal(format!(
                    "revision lengthened the tour from {len} to {next_len}"
                )));
            }
            tour = next;
            len = next_len;
            stats.add(&st);
            p = (p + shift) % big_n;
        }
    }
    Ok((tour, stats))
}

/// W initial tours, each revised through the schedule; the shortest wins
/// (ties to the lowest index).
pub fn solve_tsp(
    instance: &RoutingInstance,
    schedule: &RevisionSchedule,
    revisers: &[Arc<dyn Reviser>],
    opts: &SolveOptions,
    rng: &Rng,
) -> Result<TspSolution> {
    check_revisers(instance, schedule, revisers)?;
    let initial = match opts.init {
        InitMode::RandomInsertion => random_insertion_multi(instance, schedule.w, &rng.child(0)),
        InitMode::IndexInsertion => {
            let order: Vec<usize> = (0..instance.len()).collect();
            vec![insertion_tour(instance, &order); schedule.w]
        }
    };
    let initial_lengths: Vec<f64> =
        initial.iter().map(|t| cycle_length(instance, t.order())).collect();
    let revise_root = rng.child(1);
    let results: Vec<Result<(Tour, RoundStats)>> = initial
        .into_par_iter()
        .enumerate()
        .map(|(w, t)| improve_tour(instance, t, schedule, revisers, opts, &mut revise_root.child(w as u64)))
        .collect();
    let mut finals = Vec::with_capacity(results.len());
    for r in results {
        finals.push(r?);
    }
    let final_lengths: Vec<f64> = finals.iter().map(|(t, _)| cycle_length(instance, t.order())).collect();
    let mut chosen = 0;
    for (i, &l) in final_lengths.iter().enumerate() {
        if l < final_lengths[chosen] {
            chosen = i;
        }
    }
    let mut stats = RoundStats::default();
    for (_, s) in &finals {
        stats.add(s);
    }
    let (tour, _) = finals.swap_remove(chosen);
    Ok(TspSolution {
        tour,
        length: final_lengths[chosen],
        chosen,
        initial_lengths,
        final_lengths,
        stats,
    })
}

/// One size phase with the reviser that serves it, by registry name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSpec {
    pub size: usize,
    pub iters: usize,
    pub reviser: String,
}

impl StageSpec {
    pub fn new(size: usize, iters: usize, reviser: &str) -> Self {
        StageSpec { size, iters, reviser: reviser.to_string() }
    }
}

/// Serializable description of a complete (sub-)TSP solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TspSolverConfig {
    pub stages: Vec<StageSpec>,
    pub w: usize,
    /// Instances with at most this many nodes are solved exactly.
    pub exact_max: usize,
    #[serde(default)]
    pub options: SolveOptions,
}

impl Default for TspSolverConfig {
    /// Classical local search at three segment sizes.
    fn default() -> Self {
        TspSolverConfig {
            stages: vec![StageSpec::new(50, 5, "2opt"), StageSpec::new(20, 5, "2opt"), StageSpec::new(10, 5, "dp")],
            w: 1,
            exact_max: crate::shpp::HELD_KARP_MAX,
            options: SolveOptions::default(),
        }
    }
}

/// A [`TspSolverConfig`] with its revisers resolved.
#[derive(Clone)]
pub struct TspSolver {
    pub config: TspSolverConfig,
    pub schedule: RevisionSchedule,
    pub revisers: Vec<Arc<dyn Reviser>>,
}

impl std::fmt::Debug for TspSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TspSolver").field("config", &self.config).finish()
    }
}

impl TspSolver {
    pub fn new(config: TspSolverConfig) -> Result<Self> {
        let sizes: Vec<usize> = config.stages.iter().map(|s| s.size).collect();
        let iters: Vec<usize> = config.stages.iter().map(|s| s.iters).collect();
        let schedule = RevisionSchedule::new(&sizes, &iters, config.w)?;
        let revisers = config
            .stages
            .iter()
            .map(|s| crate::shpp::reviser_by_name(&s.reviser))
            .collect::<Result<Vec<_>>>()?;
        for (s, r) in config.stages.iter().zip(&revisers) {
            if r.info().max_size < s.size {
                return Err(GlopError::Config(format!(
                    "reviser {} cannot serve size {}",
                    s.reviser, s.size
                )));
            }
        }
        if config.exact_max > crate::shpp::HELD_KARP_MAX {
            return Err(GlopError::Config(format!(
                "exact_max {} exceeds the DP cap {}",
                config.exact_max,
                crate::shpp::HELD_KARP_MAX
            )));
        }
        Ok(TspSolver { config, schedule, revisers })
    }

    /// Replaces the reviser of every stage, e.g. with an in-memory policy.
    pub fn with_revisers(mut self, revisers: Vec<Arc<dyn Reviser>>) -> Result<Self> {
        if revisers.len() != self.schedule.stages.len() {
            return Err(GlopError::Config("one reviser per stage is required".into()));
        }
        self.revisers = revisers;
        Ok(self)
    }

    /// Closed tour over every node of `instance`.
    pub fn solve(&self, instance: &RoutingInstance, rng: &Rng) -> Result<Tour> {
        let n = instance.len();
        if n <= self.config.exact_max.max(3) {
            let order = crate::shpp::held_karp_cycle(n, &|i, j| instance.dist(i, j))?;
            return Ok(Tour(order));
        }
        Ok(solve_tsp(instance, &self.schedule, &self.revisers, &self.config.options, rng)?.tour)
    }
}
