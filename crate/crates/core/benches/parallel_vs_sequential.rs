//! Thread-pool scaling of the data-parallel kernels: the default pool against
//! a one-thread pool running the same code.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use matid_core::detection::DEFAULT_SHRINKAGE;
use matid_core::synth::{random_design, synthetic_library, synthetic_scene, LibraryConfig, SceneConfig};
use matid_core::{background_stats, detect, exhaustive_search, occam_search, SearchConfig, Strategy};
use rayon::ThreadPool;

fn pools() -> Vec<(&'static str, ThreadPool)> {
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let all = rayon::ThreadPoolBuilder::new().build().unwrap();
    vec![("sequential", one), ("parallel", all)]
}

fn search(c: &mut Criterion) {
    let d = random_design(3, 14, 60).unwrap();
    let cfg = SearchConfig { max_size: 4, ..SearchConfig::default() };
    let ex = SearchConfig { strategy: Strategy::Exhaustive, ..cfg.clone() };
    let mut g = c.benchmark_group("search");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::new("occam", name), |b| {
            b.iter(|| pool.install(|| occam_search(&d, &cfg).unwrap()))
        });
        g.bench_function(BenchmarkId::new("exhaustive", name), |b| {
            b.iter(|| pool.install(|| exhaustive_search(&d, &ex).unwrap()))
        });
    }
    g.finish();
}

fn ace(c: &mut Criterion) {
    let lib = synthetic_library(1, &LibraryConfig::default()).unwrap();
    let sc = synthetic_scene(1, &lib, &SceneConfig::default()).unwrap();
    let stats = background_stats(&sc.cube, DEFAULT_SHRINKAGE, None).unwrap();
    let mut g = c.benchmark_group("detect");
    g.sample_size(20);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::new("ace", name), |b| {
            b.iter(|| pool.install(|| detect(&sc.cube, &lib.true_target, &stats, 0.5).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, search, ace);
criterion_main!(benches);
