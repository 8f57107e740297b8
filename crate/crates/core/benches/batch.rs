use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use slbqp::bench::{run_batch_sequential, tasks_from_suite, BenchTask};
use slbqp::gen::{suite, SuiteKind};
use slbqp::{Mode, SolverConfig};

fn tasks(n: usize) -> Vec<BenchTask> {
    let problems = suite(SuiteKind::SconvNondeg, true, n, 0).unwrap();
    tasks_from_suite(&problems[..9], &[Mode::P2gpCg, Mode::Pabbmin])
}

fn batch(c: &mut Criterion) {
    let mut group = c.benchmark_group("batch");
    group.sample_size(10);
    for n in [100, 300] {
        let tasks = tasks(n);
        group.bench_with_input(BenchmarkId::new("sequential", n), &tasks, |b, t| {
            b.iter(|| run_batch_sequential(t, &SolverConfig::new))
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("parallel", n), &tasks, |b, t| {
            b.iter(|| slbqp::bench::run_batch_parallel(t, &SolverConfig::new))
        });
    }
    group.finish();
}

criterion_group!(benches, batch);
criterion_main!(benches);
