//! Monte-Carlo orchestration: many independent runs across seeds and
//! algorithms, with per-step aggregation of regret and information-matrix
//! trajectories. Runs are embarrassingly parallel; with the `parallel`
//! feature the batch fans out over a rayon pool, and the sequential path is
//! always available for comparison.

use nalgebra::DMatrix;

use crate::adaptive::{run_full, Algorithm, AlgoConfig, EpisodeSchedule, RunFailure, RunTrace};
use crate::plant::{CostParams, NoiseParams, SystemParams};

/// Everything a single run needs except the algorithm and the seed.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub system: SystemParams,
    pub noise: NoiseParams,
    pub cost: CostParams,
    pub schedule: EpisodeSchedule,
    pub h: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub c_tol: f64,
    pub sigma_u_sq: f64,
    pub lambda_min_stride: usize,
    pub oracle_diagnostics: bool,
}

impl Scenario {
    pub fn config(&self, algorithm: Algorithm, seed: u64) -> AlgoConfig {
        AlgoConfig {
            algorithm,
            h: self.h,
            lambda: self.lambda,
            gamma: self.gamma,
            alpha: self.alpha,
            c_tol: self.c_tol,
            sigma_u_sq: self.sigma_u_sq,
            seed,
            lambda_min_stride: self.lambda_min_stride,
            oracle_diagnostics: self.oracle_diagnostics,
        }
    }
}

/// One completed or failed run.
#[derive(Debug)]
pub struct RunOutcome {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub result: Result<RunTrace, RunFailure>,
}

fn run_one(scenario: &Scenario, algorithm: Algorithm, seed: u64) -> RunOutcome {
    let cfg = scenario.config(algorithm, seed);
    let result = run_full(
        &scenario.system,
        &scenario.noise,
        &scenario.cost,
        &scenario.schedule,
        &cfg,
    );
    RunOutcome {
        algorithm,
        seed,
        result,
    }
}

/// Runs every (algorithm, seed) pair sequentially, in the given order.
pub fn run_batch_sequential(
    scenario: &Scenario,
    algorithms: &[Algorithm],
    seeds: &[u64],
) -> Vec<RunOutcome> {
    let jobs: Vec<(Algorithm, u64)> = algorithms
        .iter()
        .flat_map(|&a| seeds.iter().map(move |&s| (a, s)))
        .collect();
    jobs.iter()
        .map(|&(a, s)| run_one(scenario, a, s))
        .collect()
}

/// Runs every (algorithm, seed) pair on the rayon pool. Output order is
/// deterministic and identical to the sequential path.
#[cfg(feature = "parallel")]
pub fn run_batch(scenario: &Scenario, algorithms: &[Algorithm], seeds: &[u64]) -> Vec<RunOutcome> {
    use rayon::prelude::*;
    let jobs: Vec<(Algorithm, u64)> = algorithms
        .iter()
        .flat_map(|&a| seeds.iter().map(move |&s| (a, s)))
        .collect();
    jobs.par_iter()
        .map(|&(a, s)| run_one(scenario, a, s))
        .collect()
}

/// Sequential fallback when the `parallel` feature is disabled.
#[cfg(not(feature = "parallel"))]
pub fn run_batch(scenario: &Scenario, algorithms: &[Algorithm], seeds: &[u64]) -> Vec<RunOutcome> {
    run_batch_sequential(scenario, algorithms, seeds)
}

/// Per-algorithm aggregate over the successful runs of a batch.
#[derive(Debug, Clone)]
pub struct AlgoAggregate {
    pub algorithm: Algorithm,
    /// Number of successful runs behind every mean below.
    pub n_runs: usize,
    pub failed: Vec<(u64, String)>,
    pub j_star: f64,
    /// Per-step mean and sample standard deviation of cumulative regret.
    pub mean_regret: Vec<f64>,
    pub std_regret: Vec<f64>,
    /// Per-step mean/std of the information minimum eigenvalue (NaN where
    /// undefined), plus the freshness flags shared by all runs.
    pub mean_lambda_min: Vec<f64>,
    pub std_lambda_min: Vec<f64>,
    pub lambda_fresh: Vec<bool>,
    pub mean_avg_cost: f64,
    pub std_avg_cost: f64,
    /// Mean switch step (1-based index into the adaptive phase) over the
    /// runs that switched.
    pub mean_switch_step: Option<f64>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aggregates a batch per algorithm. Failed runs are excluded from every
/// mean and listed with their seeds; they are never silently dropped.
pub fn aggregate(outcomes: &[RunOutcome]) -> Vec<AlgoAggregate> {
    let mut algos: Vec<Algorithm> = outcomes.iter().map(|o| o.algorithm).collect();
    algos.sort();
    algos.dedup();

    let mut out = Vec::new();
    for algo in algos {
        let traces: Vec<&RunTrace> = outcomes
            .iter()
            .filter(|o| o.algorithm == algo)
            .filter_map(|o| o.result.as_ref().ok())
            .collect();
        let failed: Vec<(u64, String)> = outcomes
            .iter()
            .filter(|o| o.algorithm == algo)
            .filter_map(|o| {
                o.result
                    .as_ref()
                    .err()
                    .map(|f| (o.seed, f.to_string()))
            })
            .collect();
        let horizon = traces.first().map_or(0, |t| t.len());
        let mut mean_regret = vec![f64::NAN; horizon];
        let mut std_regret = vec![f64::NAN; horizon];
        let mut mean_lambda = vec![f64::NAN; horizon];
        let mut std_lambda = vec![f64::NAN; horizon];
        let mut scratch = Vec::with_capacity(traces.len());
        for t in 0..horizon {
            scratch.clear();
            scratch.extend(traces.iter().map(|tr| tr.regret[t]));
            let (m, s) = mean_std(&scratch);
            mean_regret[t] = m;
            std_regret[t] = s;

            scratch.clear();
            scratch.extend(
                traces
                    .iter()
                    .map(|tr| tr.lambda_min[t])
                    .filter(|v| v.is_finite()),
            );
            if !scratch.is_empty() {
                let (m, s) = mean_std(&scratch);
                mean_lambda[t] = m;
                std_lambda[t] = s;
            }
        }
        let avg_costs: Vec<f64> = traces.iter().map(|tr| tr.avg_cost()).collect();
        let (mean_avg_cost, std_avg_cost) = mean_std(&avg_costs);
        let switches: Vec<f64> = traces
            .iter()
            .filter_map(|tr| tr.switch_step.map(|s| s as f64))
            .collect();
        let mean_switch_step = if switches.is_empty() {
            None
        } else {
            Some(switches.iter().sum::<f64>() / switches.len() as f64)
        };
        out.push(AlgoAggregate {
            algorithm: algo,
            n_runs: traces.len(),
            failed,
            j_star: traces.first().map_or(f64::NAN, |t| t.j_star),
            mean_regret,
            std_regret,
            mean_lambda_min: mean_lambda,
            std_lambda_min: std_lambda,
            lambda_fresh: traces
                .first()
                .map(|t| t.lambda_fresh.clone())
                .unwrap_or_default(),
            mean_avg_cost,
            std_avg_cost,
            mean_switch_step,
        });
    }
    out
}

/// Least-squares slope of `log(mean regret)` against `log(t)` over
/// `t in [t_lo, t_hi)`, skipping nonpositive means.
pub fn log_log_regret_slope(mean_regret: &[f64], t_lo: usize, t_hi: usize) -> f64 {
    let (mut sx, mut sy, mut sxx, mut sxy, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for t in t_lo..t_hi.min(mean_regret.len()) {
        let r = mean_regret[t];
        if !(r > 0.0) {
            continue;
        }
        let lx = (t as f64).ln();
        let ly = r.ln();
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        n += 1.0;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// The web-server benchmark system with the experiment's noise, cost, and
/// hyperparameters.
///
/// The input matrix carries the 1e-4 scale of the underlying physical model
/// (utilization fractions per unit of actuator); see the bundled config.
pub fn web_server_scenario() -> Scenario {
    let system = SystemParams::new(
        DMatrix::from_row_slice(2, 2, &[0.54, -0.11, -0.026, 0.63]),
        DMatrix::from_row_slice(2, 2, &[-85e-4, 4.4e-4, -2.5e-4, 2.8e-4]),
        DMatrix::from_row_slice(2, 2, &[0.2, 0.3, 0.3, 0.2]),
    )
    .expect("static dims");
    Scenario {
        system,
        noise: NoiseParams::new(0.1, 0.1).expect("positive"),
        cost: CostParams::new(
            DMatrix::from_row_slice(2, 2, &[5.0, 0.0, 0.0, 1.0]),
            DMatrix::from_row_slice(2, 2, &[1.0 / 2500.0, 0.0, 0.0, 1e-6]),
        )
        .expect("spd"),
        schedule: EpisodeSchedule::new(25, 11).expect("valid"),
        h: 12,
        lambda: 1e-3,
        gamma: 25f64.sqrt() / 10.0,
        alpha: 1.0,
        c_tol: 1.0,
        sigma_u_sq: 0.1,
        lambda_min_stride: 1,
        oracle_diagnostics: true,
    }
}
