use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simec::linalg::{self, Exec, Matrix};
use simec::net::{self, NetworkShape, ObjectiveConfig, OutputActivation};
use simec::similarity::TargetSpec;

fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn matmul(c: &mut Criterion) {
    let mut group = c.benchmark_group("matmul");
    group.sample_size(20);
    for (rows, inner, cols) in [(256, 256, 256), (800, 256, 64), (800, 10, 800)] {
        let a = random(rows, inner, 1);
        let b = random(inner, cols, 2);
        let label = format!("{rows}x{inner}x{cols}");
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, &label), &exec, |bench, &exec| {
                bench.iter(|| linalg::matmul_with(black_box(&a), black_box(&b), exec).unwrap())
            });
        }
    }
    group.finish();
}

fn gram(c: &mut Criterion) {
    let mut group = c.benchmark_group("gram");
    group.sample_size(20);
    let y = random(800, 10, 3);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new(name, "800x10"), &exec, |bench, &exec| {
            bench.iter(|| linalg::matmul_nt_with(black_box(&y), black_box(&y), exec).unwrap())
        });
    }
    group.finish();
}

/// One full-batch gradient of the objective. The kernels inside follow the
/// build: compare runs with and without the `parallel` feature.
fn gradient_step(c: &mut Criterion) {
    let shape = NetworkShape {
        input_dim: 256,
        hidden: vec![64],
        embed_dim: 10,
        n_targets: 500,
        k: 1,
        encoder_bias: true,
        output_activation: OutputActivation::Identity,
    };
    let p = net::init(&shape, 4).unwrap();
    let x = random(500, 256, 5);
    let s = random(500, 500, 6).symmetrize().unwrap();
    let target = TargetSpec::square(s.clone()).unwrap();
    let obj = ObjectiveConfig {
        lambda_sym: 1.0,
        sym_target: Some(s),
        ..ObjectiveConfig::default()
    };
    let build = if cfg!(feature = "parallel") { "parallel" } else { "sequential" };
    let mut group = c.benchmark_group("gradient_step");
    group.sample_size(20);
    group.bench_function(BenchmarkId::new(build, "500x256_h64_d10"), |bench| {
        bench.iter(|| net::backward(black_box(&p), &x, &target, &obj).unwrap())
    });
    group.finish();
}

criterion_group!(benches, matmul, gram, gradient_step);
criterion_main!(benches);
