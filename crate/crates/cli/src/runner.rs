//! Experiment execution: fans the configured (algorithm, seed) grid out
//! over the worker pool, aggregates, and writes the output files.

use std::path::Path;

use lqg_core::experiment::{aggregate, run_batch, run_batch_sequential, AlgoAggregate, RunOutcome};

use crate::config::ExperimentConfig;
use crate::csv_out;

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    /// Worker pool width; `None` uses the default pool, `Some(1)` runs
    /// sequentially.
    pub parallelism: Option<usize>,
    /// Exit nonzero if any run failed.
    pub strict: bool,
}

pub struct ExperimentOutput {
    pub outcomes: Vec<RunOutcome>,
    pub aggregates: Vec<AlgoAggregate>,
}

/// Runs the configured experiment and writes all CSV outputs into `dir`.
pub fn run_experiment(
    config: &ExperimentConfig,
    dir: &Path,
    options: &RunOptions,
) -> std::io::Result<ExperimentOutput> {
    std::fs::create_dir_all(dir)?;
    let outcomes = match options.parallelism {
        Some(1) => run_batch_sequential(&config.scenario, &config.algorithms, &config.seeds),
        #[cfg(feature = "parallel")]
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .expect("thread pool");
            pool.install(|| run_batch(&config.scenario, &config.algorithms, &config.seeds))
        }
        #[cfg(not(feature = "parallel"))]
        Some(_) => run_batch_sequential(&config.scenario, &config.algorithms, &config.seeds),
        None => run_batch(&config.scenario, &config.algorithms, &config.seeds),
    };
    let aggregates = aggregate(&outcomes);

    csv_out::write_regret_mean(dir, &aggregates)?;
    csv_out::write_fim_lambda_min(dir, &aggregates)?;
    csv_out::write_summary(dir, &aggregates)?;
    for outcome in &outcomes {
        if let Ok(trace) = &outcome.result {
            csv_out::write_trace(dir, trace)?;
        }
    }
    Ok(ExperimentOutput {
        outcomes,
        aggregates,
    })
}

/// Human-readable per-algorithm summary lines, plus failures.
pub fn print_summary(output: &ExperimentOutput) {
    for agg in &output.aggregates {
        let switch = agg
            .mean_switch_step
            .map(|s| format!(", mean switch step {s:.1}"))
            .unwrap_or_default();
        println!(
            "{}: {} runs ok, {} failed, J* = {:.6}, mean avg cost = {:.6} (std {:.2e}){switch}",
            agg.algorithm,
            agg.n_runs,
            agg.failed.len(),
            agg.j_star,
            agg.mean_avg_cost,
            agg.std_avg_cost
        );
        for (seed, reason) in &agg.failed {
            println!("  failed seed {seed}: {reason}");
        }
    }
}

pub fn failed_count(output: &ExperimentOutput) -> usize {
    output
        .outcomes
        .iter()
        .filter(|o| o.result.is_err())
        .count()
}
