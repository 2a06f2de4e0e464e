use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use rcl::disorder::{Law, SiteField};
use rcl::lattice::RangeWalker;
use rcl::par::{map_tasks, map_tasks_sequential};
use rcl::rng::stream;

const TASKS: usize = 64;
const WALKS: usize = 32;

/// One chunk of quenched weights: WALKS walks of n steps in a shared field.
fn chunk(env: &SiteField, d: usize, n: usize, i: usize) -> f64 {
    let mut rng = stream(7, 1, i as u64);
    let mut walker = RangeWalker::new(d, n);
    let mut z = 0.0;
    for _ in 0..WALKS {
        walker.run(n, &mut rng).expect("fits");
        let h: f64 = walker.visited.iter().map(|&k| 0.1 * env.omega_key(k)).sum();
        z += h.exp();
    }
    z
}

fn bench(c: &mut Criterion) {
    let env = SiteField {
        law: Law::Gaussian,
        seed: 11,
    };
    let mut g = c.benchmark_group("quenched_chunks");
    g.sample_size(10);
    for n in [256usize, 1024] {
        g.bench_with_input(BenchmarkId::new("parallel", n), &n, |b, &n| {
            b.iter(|| map_tasks(TASKS, |i| chunk(&env, 2, n, i)).iter().sum::<f64>())
        });
        g.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, &n| {
            b.iter(|| map_tasks_sequential(TASKS, |i| chunk(&env, 2, n, i)).iter().sum::<f64>())
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
