use std::path::PathBuf;
use std::process::ExitCode;

use lqg_adapt::config::{load_config, ExperimentConfig};
use lqg_adapt::oracle_cmd::run_oracle_checks;
use lqg_adapt::runner::{failed_count, print_summary, run_experiment, RunOptions};
use lqg_core::adaptive::Algorithm;

const USAGE: &str = "\
lqg-adapt: adaptive LQG regret benchmarks

USAGE:
  lqg-adapt run --config PATH [FLAGS]     run the configured experiment
  lqg-adapt validate --config PATH        check a config without running
  lqg-adapt oracle --config PATH          run independent numerical self-checks

RUN FLAGS:
  --algos a,b,c        subset of naive,if2e,cec_only,optimal (default: from config)
  --seeds N            run seeds base_seed..base_seed+N-1 (overrides config count)
  --seed-list a,b,c    explicit seed list (overrides config)
  --out DIR            output directory (default: from config, else ./out)
  --parallel K         worker pool width (default: one worker per core)
                       The LQG_ADAPT_THREADS environment variable overrides this.
  --strict             exit nonzero if any run fails

OUTPUT FILES (written to DIR):
  regret_mean.csv      t, algo, mean, std, n
  fim_lambda_min.csv   t, algo, mean, std, stride_flag
  summary.csv          algo, mean_avg_cost, std_avg_cost, mean_switch_step, failed_runs, J_star
  trace_<algo>_<seed>.csv   per-step log of each successful run
";

struct Cli {
    command: String,
    config: Option<PathBuf>,
    algos: Option<Vec<Algorithm>>,
    seeds_n: Option<usize>,
    seed_list: Option<Vec<u64>>,
    out: Option<PathBuf>,
    parallel: Option<usize>,
    strict: bool,
}

fn parse_args() -> Result<Cli, String> {
    let mut args = std::env::args().skip(1);
    let command = args.next().ok_or("missing command")?;
    let mut cli = Cli {
        command,
        config: None,
        algos: None,
        seeds_n: None,
        seed_list: None,
        out: None,
        parallel: None,
        strict: false,
    };
    while let Some(arg) = args.next() {
        let mut value = |name: &str| {
            args.next()
                .ok_or_else(|| format!("flag {name} needs a value"))
        };
        match arg.as_str() {
            "--config" => cli.config = Some(PathBuf::from(value("--config")?)),
            "--algos" => {
                let list = value("--algos")?;
                let parsed: Result<Vec<Algorithm>, _> =
                    list.split(',').map(|s| s.trim().parse()).collect();
                cli.algos = Some(parsed.map_err(|e| e.to_string())?);
            }
            "--seeds" => {
                cli.seeds_n = Some(
                    value("--seeds")?
                        .parse()
                        .map_err(|e| format!("--seeds: {e}"))?,
                )
            }
            "--seed-list" => {
                let list = value("--seed-list")?;
                let parsed: Result<Vec<u64>, _> =
                    list.split(',').map(|s| s.trim().parse()).collect();
                cli.seed_list = Some(parsed.map_err(|e| format!("--seed-list: {e}"))?);
            }
            "--out" => cli.out = Some(PathBuf::from(value("--out")?)),
            "--parallel" => {
                cli.parallel = Some(
                    value("--parallel")?
                        .parse()
                        .map_err(|e| format!("--parallel: {e}"))?,
                )
            }
            "--strict" => cli.strict = true,
            "--help" | "-h" => return Err(String::new()),
            other => return Err(format!("unknown flag {other}")),
        }
    }
    Ok(cli)
}

fn apply_overrides(config: &mut ExperimentConfig, cli: &Cli) -> Result<(), String> {
    if let Some(algos) = &cli.algos {
        config.algorithms = algos.clone();
    }
    if let Some(list) = &cli.seed_list {
        config.seeds = list.clone();
    } else if let Some(n) = cli.seeds_n {
        let base = config.seeds.first().copied().unwrap_or(1);
        config.seeds = (0..n as u64).map(|i| base + i).collect();
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    if config.seeds.is_empty() {
        return Err("no seeds to run".to_string());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match parse_args() {
        Ok(cli) => cli,
        Err(msg) => {
            if !msg.is_empty() {
                eprintln!("error: {msg}\n");
            }
            eprint!("{USAGE}");
            return ExitCode::from(2);
        }
    };
    let Some(config_path) = cli.config.clone() else {
        eprintln!("error: --config is required\n");
        eprint!("{USAGE}");
        return ExitCode::from(2);
    };

    match cli.command.as_str() {
        "validate" => match load_config(&config_path) {
            Ok(config) => {
                println!(
                    "ok: {} algorithms, {} seeds, horizon {} steps, n_x = {}, n_u = {}, n_y = {}",
                    config.algorithms.len(),
                    config.seeds.len(),
                    config.scenario.schedule.total_steps(),
                    config.scenario.system.n_x(),
                    config.scenario.system.n_u(),
                    config.scenario.system.n_y()
                );
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("{e}");
                ExitCode::FAILURE
            }
        },
        "oracle" => match load_config(&config_path) {
            Ok(config) => {
                if run_oracle_checks(&config) {
                    println!("all oracle checks passed");
                    ExitCode::SUCCESS
                } else {
                    eprintln!("oracle checks FAILED");
                    ExitCode::FAILURE
                }
            }
            Err(e) => {
                eprintln!("{e}");
                ExitCode::FAILURE
            }
        },
        "run" => {
            let mut config = match load_config(&config_path) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::FAILURE;
                }
            };
            if let Err(msg) = apply_overrides(&mut config, &cli) {
                eprintln!("error: {msg}");
                return ExitCode::from(2);
            }
            let parallelism = std::env::var("LQG_ADAPT_THREADS")
                .ok()
                .and_then(|v| v.parse::<usize>().ok())
                .or(cli.parallel);
            let options = RunOptions {
                parallelism,
                strict: cli.strict,
            };
            let out_dir = config.output_dir.clone();
            match run_experiment(&config, &out_dir, &options) {
                Ok(output) => {
                    print_summary(&output);
                    println!("outputs written to {}", out_dir.display());
                    if options.strict && failed_count(&output) > 0 {
                        eprintln!("{} run(s) failed (strict mode)", failed_count(&output));
                        ExitCode::FAILURE
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e) => {
                    eprintln!("i/o error: {e}");
                    ExitCode::FAILURE
                }
            }
        }
        other => {
            eprintln!("error: unknown command {other}\n");
            eprint!("{USAGE}");
            ExitCode::from(2)
        }
    }
}
