//! Sequential vs rayon row-parallel kernels: raw matmul, an MLP
//! forward/backward at critic-update size, and scripted data collection.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use o2o_core::envs::{collect_trajectories, MazeKind, PointMaze, ScriptedCollector};
use o2o_core::ndmath::{Activation, Matrix, Mlp};
use o2o_core::par::ExecMode;

const MODES: [(&str, ExecMode); 2] = [("sequential", ExecMode::Sequential), ("parallel", ExecMode::Parallel)];

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    o2o_core::actor::standard_normal(rows, cols, rng)
}

fn matmul(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut g = c.benchmark_group("matmul_t");
    for n in [64, 256] {
        let a = random(n * 4, n, &mut rng);
        let b = random(n, n, &mut rng);
        for (name, mode) in MODES {
            g.bench_with_input(BenchmarkId::new(name, n), &n, |bch, _| {
                bch.iter(|| black_box(a.matmul_t(&b, mode).unwrap()))
            });
        }
    }
    g.finish();
}

fn mlp_step(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    // A critic update on a 256-row batch with 21 stacked action sets.
    let x = random(256 * 21, 6, &mut rng);
    let up = random(256 * 21, 1, &mut rng);
    let base = Mlp::new(&[6, 256, 256, 256, 1], Activation::Relu, &mut rng).unwrap();
    let mut g = c.benchmark_group("critic_forward_backward");
    g.sample_size(10);
    for (name, mode) in MODES {
        let net = base.clone().with_exec_mode(mode);
        g.bench_function(name, |bch| {
            bch.iter(|| {
                let (_, tape) = net.forward_with_tape(&x).unwrap();
                black_box(net.backward_tape(&tape, &up).unwrap())
            })
        });
    }
    g.finish();
}

fn collection(c: &mut Criterion) {
    let env = PointMaze::preset(MazeKind::Medium);
    let collector = ScriptedCollector::play();
    let mut g = c.benchmark_group("collect_64_episodes");
    g.sample_size(10);
    for (name, mode) in MODES {
        g.bench_function(name, |bch| {
            bch.iter(|| black_box(collect_trajectories(&env, &collector, 64, 0.99, 3, mode).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, matmul, mlp_step, collection);
criterion_main!(benches);
