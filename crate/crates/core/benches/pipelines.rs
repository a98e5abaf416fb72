use std::path::Path;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use photon_retrieval::cli::{figure_config, sweep};
use photon_retrieval::config::SimConfig;
use photon_retrieval::par;
use photon_retrieval::quad::Tolerance;

fn bench_sweep(c: &mut Criterion) {
    let text = figure_config("gaussian", "2*pi*20", "2*pi*1");
    let cfg = SimConfig::parse(&text, Path::new("."))
        .and_then(|c| c.with_grid_points(2001))
        .expect("figure config parses");

    let mut group = c.benchmark_group("depth_sweep");
    group.sample_size(10);
    for (label, on) in [("sequential", false), ("parallel", true)] {
        group.bench_with_input(BenchmarkId::from_parameter(label), &on, |b, &on| {
            par::set_enabled(on);
            b.iter(|| sweep(&cfg, Tolerance::default()).expect("sweep runs"));
        });
    }
    par::set_enabled(true);
    group.finish();
}

criterion_group!(benches, bench_sweep);
criterion_main!(benches);
