//! Serial vs parallel timings for the heavier pipelines.
//!
//! "serial" runs inside a one-thread rayon pool, "parallel" inside the
//! default pool. Built with `--no-default-features` both variants take the
//! sequential code path and should time the same.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rayon::ThreadPoolBuilder;

use convex_auction::mechanisms::{heuristic_brm, heuristic_lb_rrm, AllocMethod};
use convex_auction::model::{make_uniform, AuctionInstance};
use convex_auction::oracle::{enumerate, exact_rrm, Objective, OracleConfig};

fn pools() -> [(&'static str, rayon::ThreadPool); 2] {
    [
        ("serial", ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
        ("parallel", ThreadPoolBuilder::new().build().unwrap()),
    ]
}

fn uniform(n: usize, k: usize) -> AuctionInstance {
    let (t, d) = make_uniform(k).unwrap();
    AuctionInstance::symmetric(n, t, d).unwrap()
}

fn greedy_pipelines(c: &mut Criterion) {
    let mut group = c.benchmark_group("heuristic_greedy");
    group.sample_size(10);
    for n in [3usize, 5] {
        let inst = uniform(n, 5);
        for (label, pool) in pools() {
            group.bench_with_input(BenchmarkId::new(format!("rrm/{label}"), n), &inst, |b, inst| {
                b.iter(|| pool.install(|| heuristic_lb_rrm(inst, AllocMethod::greedy_default()).unwrap()))
            });
            group.bench_with_input(BenchmarkId::new(format!("brm/{label}"), n), &inst, |b, inst| {
                b.iter(|| pool.install(|| heuristic_brm(inst, AllocMethod::greedy_default()).unwrap()))
            });
        }
    }
    group.finish();
}

fn oracles(c: &mut Criterion) {
    let mut group = c.benchmark_group("oracle");
    group.sample_size(10);
    let inst = uniform(2, 2);
    let wide = uniform(2, 3);
    for (label, pool) in pools() {
        group.bench_function(BenchmarkId::new("enumerate_g0.1", label), |b| {
            b.iter(|| pool.install(|| enumerate(&inst, Objective::Robust, 0.1).unwrap()))
        });
        group.bench_function(BenchmarkId::new("concave_rrm_2x3", label), |b| {
            b.iter(|| pool.install(|| exact_rrm(&wide, &OracleConfig::default()).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, greedy_pipelines, oracles);
criterion_main!(benches);
