//! Sequential vs rayon-parallel Monte-Carlo batches, plus the per-run hot
//! paths (Riccati solve, realization) on the benchmark system.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DMatrix;

use lqg_core::adaptive::{Algorithm, EpisodeSchedule};
use lqg_core::control_math::{solve_control_dare, DEFAULT_DARE_MAX_ITER, DEFAULT_DARE_TOL};
use lqg_core::experiment::{run_batch, run_batch_sequential, web_server_scenario};
use lqg_core::filtering::compute_gains;
use lqg_core::sysid::{ho_kalman, markov_from_params, MarkovEstimate};

fn bench_batches(c: &mut Criterion) {
    let mut scenario = web_server_scenario();
    // Desk-size horizon so a bench iteration stays subsecond per run.
    scenario.schedule = EpisodeSchedule::new(25, 5).unwrap();
    scenario.lambda_min_stride = 4;
    let seeds: Vec<u64> = (1..=8).collect();
    let algos = [Algorithm::Naive];

    let mut group = c.benchmark_group("monte_carlo_batch");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("sequential", seeds.len()), |b| {
        b.iter(|| run_batch_sequential(&scenario, &algos, &seeds))
    });
    group.bench_function(BenchmarkId::new("parallel", seeds.len()), |b| {
        b.iter(|| run_batch(&scenario, &algos, &seeds))
    });
    group.finish();
}

fn bench_solvers(c: &mut Criterion) {
    let scenario = web_server_scenario();
    let system = &scenario.system;
    let qc = system.c().transpose() * scenario.cost.q() * system.c();

    c.bench_function("control_dare_web_server", |b| {
        b.iter(|| {
            solve_control_dare(
                system.a(),
                system.b(),
                &qc,
                scenario.cost.r(),
                DEFAULT_DARE_TOL,
                DEFAULT_DARE_MAX_ITER,
            )
            .unwrap()
        })
    });

    let gains = compute_gains(system, &scenario.noise, &scenario.cost).unwrap();
    let m = markov_from_params(system, &gains.f, 12).unwrap();
    let me = MarkovEstimate {
        m_hat: m.clone(),
        v: DMatrix::identity(m.ncols(), m.ncols()),
        lambda: 1e-12,
        n_samples: 1,
    };
    c.bench_function("ho_kalman_web_server", |b| {
        b.iter(|| ho_kalman(&me, 2, 12, 6, 5).unwrap())
    });
}

criterion_group!(benches, bench_batches, bench_solvers);
criterion_main!(benches);
