use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use glop_bench::{instance, shpp_tasks};
use glop_core::insertion::random_insertion;
use glop_core::neural::{ModelConfig, Policy};
use glop_core::partition::{build_sparse_graph, sample_partition, GnnConfig, PartitionMode, PartitionModel};
use glop_core::revision::{revise_once, ReviseOptions};
use glop_core::shpp::{held_karp_shpp, reviser_by_name};
use glop_core::{ProblemKind, Rng};

fn insertion(c: &mut Criterion) {
    let mut g = c.benchmark_group("random_insertion");
    for n in [100, 1000, 5000] {
        let inst = instance(ProblemKind::Tsp, n, 1);
        g.bench_with_input(BenchmarkId::from_parameter(n), &inst, |b, inst| {
            b.iter(|| random_insertion(inst, &mut Rng::new(0)))
        });
    }
    g.finish();
}

fn exact(c: &mut Criterion) {
    let mut g = c.benchmark_group("held_karp_shpp");
    for n in [8, 12, 16] {
        let task = shpp_tasks(n, 1, 2).remove(0);
        g.bench_with_input(BenchmarkId::from_parameter(n), &task, |b, t| b.iter(|| held_karp_shpp(black_box(t))));
    }
    g.finish();
}

fn revision_round(c: &mut Criterion) {
    let inst = instance(ProblemKind::Tsp, 1000, 3);
    let tour = random_insertion(&inst, &mut Rng::new(0));
    let opts = ReviseOptions::default();
    let mut g = c.benchmark_group("revise_once_tsp1000");
    g.sample_size(10);
    for (name, n) in [("dp", 10), ("2opt", 50)] {
        let r = reviser_by_name(name).unwrap();
        g.bench_function(format!("{name}-{n}"), |b| b.iter(|| revise_once(&inst, &tour, n, 0, r.as_ref(), &opts)));
    }
    g.finish();
}

fn neural_inference(c: &mut Criterion) {
    let policy = Policy::init(ModelConfig::toy(20), &mut Rng::new(4)).unwrap();
    let task = shpp_tasks(20, 1, 5).remove(0);
    c.bench_function("neural_inference_n20", |b| b.iter(|| policy.inference(black_box(&task.raw))));
}

fn partition(c: &mut Criterion) {
    let inst = instance(ProblemKind::Cvrp, 1000, 6);
    let model = PartitionModel::init(GnnConfig::toy(ProblemKind::Cvrp), &mut Rng::new(7)).unwrap();
    let graph = build_sparse_graph(&inst, 100).unwrap();
    let hm = model.heatmap(&graph).unwrap();
    let mut g = c.benchmark_group("partition_cvrp1000");
    g.sample_size(10);
    g.bench_function("heatmap", |b| b.iter(|| model.heatmap(black_box(&graph))));
    g.bench_function("sample", |b| {
        b.iter(|| sample_partition(&hm, &inst, PartitionMode::Sample, &mut Rng::new(0), 2, false))
    });
    g.finish();
}

criterion_group!(benches, insertion, exact, revision_round, neural_inference, partition);
criterion_main!(benches);
