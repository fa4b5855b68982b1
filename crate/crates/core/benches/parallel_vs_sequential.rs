use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hacl::harness::{sweep, ExperimentConfig, SweepOptions};
use hacl::predictor::{HiddenState, RecurrentParams, RecurrentSizes};
use hacl::{BinId, CommandGrid};

fn predict_all(c: &mut Criterion) {
    let grid = CommandGrid::default();
    let mut rng = hacl::rng::stream(0, hacl::rng::PREDICTOR_INIT);
    let params = RecurrentParams::init(grid.len(), RecurrentSizes { hidden: 64, embed: 32 }, &mut rng);
    let h = HiddenState(vec![0.1; 64]);
    let bins: Vec<BinId> = (0..grid.len()).map(BinId).collect();

    let mut g = c.benchmark_group("predict_all_4000_bins");
    g.bench_function("parallel", |b| {
        b.iter(|| black_box(params.predict_all(&h, &bins).unwrap()))
    });
    g.bench_function("sequential", |b| {
        b.iter(|| black_box(params.predict_all_sequential(&h, &bins).unwrap()))
    });
    g.finish();
}

fn small_sweep(c: &mut Criterion) {
    let mut cfg = ExperimentConfig::parse(
        "run.budget = 200\nrun.seeds = 0, 1, 2, 3\nsweep.methods = ha_greedy+recurrent, uniform, ucb",
    )
    .expect("valid config");
    cfg.grid_bins = [10, 4, 10];

    let mut g = c.benchmark_group("sweep_3x4_runs");
    g.sample_size(10);
    for parallel in [true, false] {
        let opts = SweepOptions { out: None, parallel };
        let name = if parallel { "parallel" } else { "sequential" };
        g.bench_with_input(BenchmarkId::from_parameter(name), &opts, |b, opts| {
            b.iter(|| black_box(sweep(&cfg, opts).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, predict_all, small_sweep);
criterion_main!(benches);
