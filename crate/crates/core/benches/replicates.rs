//! Whole-scenario throughput with replicates run one after another versus
//! spread over a rayon pool. Build with `--no-default-features` to see the
//! sequential fallback take the parallel path too.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use survchan_core::harness::{run_scenario, Execution, ScenarioConfig};

const SCENARIO: &str = r#"
[run]
replicates = 16
seed = 11

[internet]
features = 200
informative = 10
confounded = 10

[confounds]
seasonal_magnitude = 1.0
"#;

fn replicates(c: &mut Criterion) {
    let config = ScenarioConfig::from_toml_str(SCENARIO).expect("bench scenario parses");
    let workers = std::thread::available_parallelism().map_or(4, |n| n.get()).max(2);
    let mut group = c.benchmark_group("run_scenario");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("sequential", 1), |b| {
        b.iter(|| run_scenario(black_box(&config), Execution::Sequential).unwrap())
    });
    group.bench_function(BenchmarkId::new("parallel", workers), |b| {
        b.iter(|| run_scenario(black_box(&config), Execution::Parallel { workers }).unwrap())
    });
    group.finish();
}

criterion_group!(benches, replicates);
criterion_main!(benches);
