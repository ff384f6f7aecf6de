//! Experiment configuration: a single JSON document with matrices as
//! row-major nested arrays. Loading validates everything up front and
//! reports every violation at once, not just the first.

use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Deserialize;

use lqg_core::adaptive::{AlgoConfig, Algorithm, EpisodeSchedule};
use lqg_core::experiment::Scenario;
use lqg_core::plant::{CostParams, NoiseParams, SystemParams};

#[derive(Debug)]
pub enum ConfigError {
    Io(std::io::Error),
    Parse(String),
    Validation(Vec<String>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io(e) => write!(f, "cannot read config: {e}"),
            ConfigError::Parse(e) => write!(f, "cannot parse config: {e}"),
            ConfigError::Validation(errors) => {
                writeln!(f, "invalid config ({} problems):", errors.len())?;
                for e in errors {
                    writeln!(f, "  - {e}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    system: RawSystem,
    noise: RawNoise,
    cost: RawCost,
    schedule: RawSchedule,
    algo: RawAlgo,
    seeds: RawSeeds,
    #[serde(default = "default_algorithms")]
    algorithms: Vec<String>,
    #[serde(default = "default_stride")]
    lambda_min_stride: usize,
    #[serde(default = "default_true")]
    oracle_diagnostics: bool,
    #[serde(default)]
    output_dir: Option<PathBuf>,
}

fn default_algorithms() -> Vec<String> {
    vec!["naive".to_string(), "if2e".to_string()]
}

fn default_stride() -> usize {
    1
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Deserialize)]
struct RawSystem {
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
struct RawNoise {
    sigma_w_sq: f64,
    sigma_z_sq: f64,
}

#[derive(Debug, Deserialize)]
struct RawCost {
    q: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
struct RawSchedule {
    t_w: u64,
    k_fin: u32,
}

#[derive(Debug, Deserialize)]
struct RawAlgo {
    h: usize,
    lambda: f64,
    gamma: f64,
    alpha: f64,
    c_tol: f64,
    sigma_u_sq: f64,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawSeeds {
    Range { base_seed: u64, n_runs: usize },
    List { list: Vec<u64> },
}

/// A fully validated experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub algorithms: Vec<Algorithm>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

fn parse_matrix(raw: &[Vec<f64>], name: &str, errors: &mut Vec<String>) -> Option<DMatrix<f64>> {
    if raw.is_empty() || raw[0].is_empty() {
        errors.push(format!("{name} must be a non-empty matrix"));
        return None;
    }
    let cols = raw[0].len();
    if raw.iter().any(|row| row.len() != cols) {
        errors.push(format!("{name} has ragged rows"));
        return None;
    }
    let flat: Vec<f64> = raw.iter().flatten().copied().collect();
    if flat.iter().any(|v| !v.is_finite()) {
        errors.push(format!("{name} contains non-finite entries"));
        return None;
    }
    Some(DMatrix::from_row_slice(raw.len(), cols, &flat))
}

/// Parses and validates a config file, reporting all problems found.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(ConfigError::Io)?;
    let raw: RawConfig =
        serde_json::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let mut errors = Vec::new();

    let a = parse_matrix(&raw.system.a, "system.a", &mut errors);
    let b = parse_matrix(&raw.system.b, "system.b", &mut errors);
    let c = parse_matrix(&raw.system.c, "system.c", &mut errors);
    let q = parse_matrix(&raw.cost.q, "cost.q", &mut errors);
    let r = parse_matrix(&raw.cost.r, "cost.r", &mut errors);

    let system = match (a, b, c) {
        (Some(a), Some(b), Some(c)) => match SystemParams::new(a, b, c) {
            Ok(s) => Some(s),
            Err(e) => {
                errors.push(format!("system: {e}"));
                None
            }
        },
        _ => None,
    };

    if raw.noise.sigma_w_sq <= 0.0 || raw.noise.sigma_z_sq <= 0.0 {
        errors.push("noise variances must be positive".to_string());
    }
    let noise = NoiseParams::new(
        raw.noise.sigma_w_sq.max(f64::MIN_POSITIVE).sqrt(),
        raw.noise.sigma_z_sq.max(f64::MIN_POSITIVE).sqrt(),
    )
    .ok();

    let cost = match (q, r) {
        (Some(q), Some(r)) => match CostParams::new(q, r) {
            Ok(cst) => Some(cst),
            Err(e) => {
                errors.push(format!(
                    "cost: {e} (Q and R must be symmetric positive definite)"
                ));
                None
            }
        },
        _ => None,
    };

    let schedule = match EpisodeSchedule::new(raw.schedule.t_w, raw.schedule.k_fin) {
        Ok(s) => Some(s),
        Err(e) => {
            errors.push(format!("schedule: {e}"));
            None
        }
    };

    let mut algorithms = Vec::new();
    for name in &raw.algorithms {
        match name.parse::<Algorithm>() {
            Ok(a) => algorithms.push(a),
            Err(e) => errors.push(e.to_string()),
        }
    }
    if algorithms.is_empty() {
        errors.push("at least one algorithm must be listed".to_string());
    }

    let seeds = match raw.seeds {
        RawSeeds::Range { base_seed, n_runs } => {
            if n_runs == 0 {
                errors.push("seeds.n_runs must be positive".to_string());
            }
            (0..n_runs as u64).map(|i| base_seed + i).collect()
        }
        RawSeeds::List { list } => {
            if list.is_empty() {
                errors.push("seeds.list must be non-empty".to_string());
            }
            list
        }
    };

    if raw.lambda_min_stride == 0 {
        errors.push("lambda_min_stride must be at least 1".to_string());
    }

    // Algorithm-parameter checks (positivity, T_w >= H, the Hankel split
    // constraint) need only the state dimension and the schedule, so they
    // run even when the cost matrices are rejected.
    if let (Some(system), Some(schedule)) = (&system, &schedule) {
        let probe = AlgoConfig {
            algorithm: Algorithm::Naive,
            h: raw.algo.h,
            lambda: raw.algo.lambda,
            gamma: raw.algo.gamma,
            alpha: raw.algo.alpha,
            c_tol: raw.algo.c_tol,
            sigma_u_sq: raw.algo.sigma_u_sq,
            seed: 0,
            lambda_min_stride: raw.lambda_min_stride.max(1),
            oracle_diagnostics: raw.oracle_diagnostics,
        };
        if let Err(e) = probe.validate(system.n_x(), schedule) {
            errors.push(e.to_string());
        }
    }

    if let (Some(system), Some(noise), Some(cost), Some(schedule)) =
        (system, noise, cost.clone(), schedule)
    {
        if cost.q().nrows() != system.n_y() {
            errors.push(format!(
                "cost.q is {}x{} but the system has n_y = {}",
                cost.q().nrows(),
                cost.q().ncols(),
                system.n_y()
            ));
        }
        if cost.r().nrows() != system.n_u() {
            errors.push(format!(
                "cost.r is {}x{} but the system has n_u = {}",
                cost.r().nrows(),
                cost.r().ncols(),
                system.n_u()
            ));
        }
        if errors.is_empty() {
            return Ok(ExperimentConfig {
                scenario: Scenario {
                    system,
                    noise,
                    cost,
                    schedule,
                    h: raw.algo.h,
                    lambda: raw.algo.lambda,
                    gamma: raw.algo.gamma,
                    alpha: raw.algo.alpha,
                    c_tol: raw.algo.c_tol,
                    sigma_u_sq: raw.algo.sigma_u_sq,
                    lambda_min_stride: raw.lambda_min_stride,
                    oracle_diagnostics: raw.oracle_diagnostics,
                },
                algorithms,
                seeds,
                output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from("out")),
            });
        }
    }
    Err(ConfigError::Validation(errors))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(contents: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("lqg-config-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(format!(
            "cfg-{}.json",
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .unwrap()
                .as_nanos()
        ));
        std::fs::write(&path, contents).unwrap();
        path
    }

    fn base_json() -> serde_json::Value {
        serde_json::json!({
            "system": {
                "a": [[0.54, -0.11], [-0.026, 0.63]],
                "b": [[-85e-4, 4.4e-4], [-2.5e-4, 2.8e-4]],
                "c": [[0.2, 0.3], [0.3, 0.2]]
            },
            "noise": { "sigma_w_sq": 0.01, "sigma_z_sq": 0.01 },
            "cost": { "q": [[5.0, 0.0], [0.0, 1.0]], "r": [[4e-4, 0.0], [0.0, 1e-6]] },
            "schedule": { "t_w": 25, "k_fin": 11 },
            "algo": { "h": 12, "lambda": 1e-3, "gamma": 0.5, "alpha": 1.0, "c_tol": 1.0, "sigma_u_sq": 0.1 },
            "seeds": { "base_seed": 1, "n_runs": 4 },
            "algorithms": ["naive", "if2e"]
        })
    }

    #[test]
    fn valid_config_loads() {
        let path = write_tmp(&base_json().to_string());
        let cfg = load_config(&path).unwrap();
        assert_eq!(cfg.seeds, vec![1, 2, 3, 4]);
        assert_eq!(cfg.algorithms, vec![Algorithm::Naive, Algorithm::If2e]);
        assert_eq!(cfg.scenario.schedule.total_steps(), 51_200);
    }

    #[test]
    fn indefinite_r_is_rejected_with_message() {
        let mut json = base_json();
        json["cost"]["r"] = serde_json::json!([[4e-4, 0.0], [0.0, 0.0]]);
        let path = write_tmp(&json.to_string());
        match load_config(&path) {
            Err(ConfigError::Validation(errors)) => {
                assert!(
                    errors.iter().any(|e| e.contains("positive definite")),
                    "{errors:?}"
                );
            }
            other => panic!("expected validation failure, got {other:?}"),
        }
    }

    #[test]
    fn hankel_constraint_violation_is_named() {
        let mut json = base_json();
        json["algo"]["h"] = serde_json::json!(4); // < 2*2+1
        let path = write_tmp(&json.to_string());
        match load_config(&path) {
            Err(ConfigError::Validation(errors)) => {
                assert!(errors.iter().any(|e| e.contains("Hankel")), "{errors:?}");
            }
            other => panic!("expected validation failure, got {other:?}"),
        }
    }

    #[test]
    fn seed_list_form_is_accepted() {
        let mut json = base_json();
        json["seeds"] = serde_json::json!({ "list": [9, 17, 25] });
        let path = write_tmp(&json.to_string());
        let cfg = load_config(&path).unwrap();
        assert_eq!(cfg.seeds, vec![9, 17, 25]);
    }

    #[test]
    fn multiple_errors_reported_at_once() {
        let mut json = base_json();
        json["cost"]["r"] = serde_json::json!([[4e-4, 0.0], [0.0, 0.0]]);
        json["algo"]["gamma"] = serde_json::json!(-1.0);
        json["noise"]["sigma_w_sq"] = serde_json::json!(0.0);
        let path = write_tmp(&json.to_string());
        match load_config(&path) {
            Err(ConfigError::Validation(errors)) => {
                assert!(errors.len() >= 2, "want several problems, got {errors:?}");
            }
            other => panic!("expected validation failure, got {other:?}"),
        }
    }
}
