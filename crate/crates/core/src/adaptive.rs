//! The adaptive control loops: warm-up with Gaussian inputs, episodes of
//! doubling length with re-estimation at episode starts, the per-step
//! observe → estimate → act cycle, and regret bookkeeping.
//!
//! Four policies share the harness: naive exploration (decaying covariance),
//! information-driven exploration (same until the information gate opens),
//! certainty equivalence without exploration, and the oracle optimal
//! controller built from the true parameters.

use nalgebra::{DMatrix, DVector};
use std::fmt;
use std::str::FromStr;

use crate::control_math::{spectral_radius, standard_normal_vector};
use crate::error::{Error, Result};
use crate::exploration::{if2e_sigma, naive_sigma, FimAccumulator, NaiveSchedule};
use crate::filtering::{compute_gains, control_riccati_gain, FilterState, LqgGains};
use crate::plant::{stage_cost, CostParams, NoiseParams, Plant, Process, SystemParams};
use crate::sysid::{
    build_regressor, default_hankel_split, ho_kalman, markov_error, markov_from_params,
    min_sv_gram, MomentAccumulator, RealizedModel,
};

/// Which policy drives the adaptive phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    /// Certainty equivalence plus Gaussian excitation with covariance
    /// decaying per episode.
    Naive,
    /// Same as `Naive` until the estimated information matrix clears its
    /// tolerance, then excitation scaled by the inverse minimum eigenvalue.
    If2e,
    /// Certainty equivalence from the warm-up estimate with no excitation
    /// and no further model updates.
    CecOnly,
    /// The optimal controller computed from the true parameters; the regret
    /// reference.
    Optimal,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Naive,
        Algorithm::If2e,
        Algorithm::CecOnly,
        Algorithm::Optimal,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Naive => "naive",
            Algorithm::If2e => "if2e",
            Algorithm::CecOnly => "cec_only",
            Algorithm::Optimal => "optimal",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(Algorithm::Naive),
            "if2e" => Ok(Algorithm::If2e),
            "cec_only" => Ok(Algorithm::CecOnly),
            "optimal" => Ok(Algorithm::Optimal),
            other => Err(Error::Invalid {
                context: format!(
                    "unknown algorithm '{other}' (expected naive, if2e, cec_only, optimal)"
                ),
            }),
        }
    }
}

/// Doubling episode schedule: episode k spans `[2^k T_w, 2^{k+1} T_w)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeSchedule {
    t_w: u64,
    k_fin: u32,
}

impl EpisodeSchedule {
    pub fn new(t_w: u64, k_fin: u32) -> Result<Self> {
        if t_w == 0 {
            return Err(Error::Invalid {
                context: "warm-up length must be positive".to_string(),
            });
        }
        if k_fin >= 40 {
            return Err(Error::Invalid {
                context: format!("episode count {k_fin} implies an absurd horizon"),
            });
        }
        Ok(Self { t_w, k_fin })
    }

    pub fn t_w(&self) -> u64 {
        self.t_w
    }

    pub fn k_fin(&self) -> u32 {
        self.k_fin
    }

    /// First time step of episode k (also the episode's length).
    pub fn episode_start(&self, k: u32) -> u64 {
        self.t_w << k
    }

    /// Total horizon `T = 2^{k_fin} T_w`.
    pub fn total_steps(&self) -> u64 {
        self.t_w << self.k_fin
    }

    /// Episode index of an adaptive-phase step, if any.
    pub fn episode_of(&self, t: u64) -> Option<u32> {
        if t < self.t_w || t >= self.total_steps() {
            return None;
        }
        Some((t / self.t_w).ilog2())
    }

    /// True at the last step of each episode.
    pub fn is_episode_end(&self, t: u64) -> bool {
        match self.episode_of(t) {
            Some(k) => t + 1 == self.episode_start(k + 1),
            None => false,
        }
    }
}

/// Run-level configuration shared by all algorithms.
#[derive(Debug, Clone)]
pub struct AlgoConfig {
    pub algorithm: Algorithm,
    /// Regression horizon H: the regressor stacks the last H outputs and
    /// inputs.
    pub h: usize,
    /// Ridge regularization of the Markov-parameter estimate.
    pub lambda: f64,
    /// Naive exploration scale (variance `gamma / sqrt(l_k)`).
    pub gamma: f64,
    /// Information-driven exploration scale (variance `alpha / lambda_min`).
    pub alpha: f64,
    /// Information gate tolerance.
    pub c_tol: f64,
    /// Warm-up input variance.
    pub sigma_u_sq: f64,
    pub seed: u64,
    /// Recompute the information minimum eigenvalue every this many steps;
    /// steps in between carry the last value.
    pub lambda_min_stride: usize,
    /// Compute truth-referenced diagnostics (Markov error) when the true
    /// system is known to the harness. The control path never reads these.
    pub oracle_diagnostics: bool,
}

impl AlgoConfig {
    pub fn validate(&self, n_x: usize, schedule: &EpisodeSchedule) -> Result<()> {
        let mut failures = Vec::new();
        if self.h == 0 {
            failures.push("H must be at least 1".to_string());
        }
        if (schedule.t_w() as usize) < self.h {
            failures.push(format!(
                "warm-up length {} must be at least H = {}",
                schedule.t_w(),
                self.h
            ));
        }
        let (d1, d2) = default_hankel_split(self.h);
        if self.h < 2 * n_x + 1 {
            failures.push(format!(
                "H = {} violates the Hankel constraint H >= 2 n_x + 1 = {} \
                 (split d1 = {d1}, d2 = {d2} needs d1 >= n_x and d2 >= n_x)",
                self.h,
                2 * n_x + 1
            ));
        }
        for (name, v) in [
            ("lambda", self.lambda),
            ("gamma", self.gamma),
            ("alpha", self.alpha),
            ("c_tol", self.c_tol),
            ("sigma_u_sq", self.sigma_u_sq),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                failures.push(format!("{name} must be positive, got {v}"));
            }
        }
        if self.lambda_min_stride == 0 {
            failures.push("lambda_min_stride must be at least 1".to_string());
        }
        if failures.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid {
                context: failures.join("; "),
            })
        }
    }
}

/// Sparse per-episode diagnostics recorded at the last step of each episode,
/// from exactly the data the next re-estimation would use.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeDiag {
    pub t: u64,
    pub episode: u32,
    /// Smallest singular value of the raw regressor Gram.
    pub min_sv_gram: f64,
    /// Spectral norm of the Markov-parameter estimation error, when the
    /// harness knows the truth.
    pub markov_error: Option<f64>,
}

/// Complete per-step log of one run.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub j_star: f64,
    pub n_y: usize,
    pub n_u: usize,
    /// Episode index per step; -1 during warm-up and for the optimal oracle.
    pub episode: Vec<i64>,
    pub cost: Vec<f64>,
    /// Cumulative regret (prefix sums of `cost - j_star`).
    pub regret: Vec<f64>,
    /// Exploration variance per step (warm-up rows carry the warm-up input
    /// variance; zero for policies without excitation).
    pub sigma_eta_sq: Vec<f64>,
    /// Minimum eigenvalue of the estimated information matrix; NaN before it
    /// is defined.
    pub lambda_min: Vec<f64>,
    /// Whether the eigenvalue was recomputed at this step (stride) or
    /// carried from the previous computation.
    pub lambda_fresh: Vec<bool>,
    /// Outputs, step-major.
    pub y: Vec<f64>,
    /// Inputs, step-major.
    pub u: Vec<f64>,
    pub episode_diag: Vec<EpisodeDiag>,
    /// 1-based step index *within the adaptive phase* at which the
    /// information-driven schedule first engaged.
    pub switch_step: Option<u64>,
    /// Largest `||Abar_hat^H||` seen at realization time; above 1e-6 the
    /// regression truncation bias may not be negligible.
    pub truncation_bias_max: f64,
}

impl RunTrace {
    fn with_capacity(algorithm: Algorithm, seed: u64, j_star: f64, n_y: usize, n_u: usize, cap: usize) -> Self {
        Self {
            algorithm,
            seed,
            j_star,
            n_y,
            n_u,
            episode: Vec::with_capacity(cap),
            cost: Vec::with_capacity(cap),
            regret: Vec::with_capacity(cap),
            sigma_eta_sq: Vec::with_capacity(cap),
            lambda_min: Vec::with_capacity(cap),
            lambda_fresh: Vec::with_capacity(cap),
            y: Vec::with_capacity(cap * n_y),
            u: Vec::with_capacity(cap * n_u),
            episode_diag: Vec::new(),
            switch_step: None,
            truncation_bias_max: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.cost.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cost.is_empty()
    }

    /// Long-run average cost over the whole horizon.
    pub fn avg_cost(&self) -> f64 {
        if self.cost.is_empty() {
            return 0.0;
        }
        self.cost.iter().sum::<f64>() / self.cost.len() as f64
    }

    pub fn y_at(&self, t: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.y[t * self.n_y..(t + 1) * self.n_y])
    }

    pub fn u_at(&self, t: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.u[t * self.n_u..(t + 1) * self.n_u])
    }
}

/// Prefix sums of `c_t - J*`; the last entry is the cumulative regret of the
/// whole horizon.
pub fn cumulative_regret(costs: &[f64], j_star: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(costs.len());
    let mut acc = 0.0;
    for c in costs {
        acc += c - j_star;
        out.push(acc);
    }
    out
}

/// A failed run, reported with the episode and step where it died.
#[derive(Debug, Clone)]
pub struct RunFailure {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub episode: Option<u32>,
    pub t: Option<u64>,
    pub error: Error,
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} run (seed {}) failed at step {:?} (episode {:?}): {}",
            self.algorithm, self.seed, self.t, self.episode, self.error
        )
    }
}

/// References to truth-derived quantities the harness may hold. The control
/// path reads only `optimal`, and only in oracle mode.
pub struct TruthRefs<'a> {
    /// True system and its LQG gains; required for `Algorithm::Optimal`.
    pub optimal: Option<(&'a SystemParams, &'a LqgGains)>,
    /// True Markov block for estimation-error diagnostics.
    pub markov: Option<&'a DMatrix<f64>>,
}

struct CecController {
    model: RealizedModel,
    k_gain: DMatrix<f64>,
    filter: FilterState,
}

/// Runs one full experiment (warm-up plus `k_fin` episodes) against an
/// arbitrary process. `run_full` is the plant-backed entry point; tests
/// replay logged observations through the same loop.
pub fn run_full_on<P: Process>(
    process: &mut P,
    n_x: usize,
    cost: &CostParams,
    schedule: &EpisodeSchedule,
    cfg: &AlgoConfig,
    j_star: f64,
    truth: TruthRefs<'_>,
) -> std::result::Result<RunTrace, RunFailure> {
    let mut episode_now: Option<u32> = None;
    let mut t_now: u64 = 0;
    let result = run_loop(
        process,
        n_x,
        cost,
        schedule,
        cfg,
        j_star,
        truth,
        &mut episode_now,
        &mut t_now,
    );
    result.map_err(|error| RunFailure {
        algorithm: cfg.algorithm,
        seed: cfg.seed,
        episode: episode_now,
        t: Some(t_now),
        error,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_loop<P: Process>(
    process: &mut P,
    n_x: usize,
    cost: &CostParams,
    schedule: &EpisodeSchedule,
    cfg: &AlgoConfig,
    j_star: f64,
    truth: TruthRefs<'_>,
    episode_now: &mut Option<u32>,
    t_now: &mut u64,
) -> Result<RunTrace> {
    cfg.validate(n_x, schedule)?;
    let (n_u, n_y) = (process.n_u(), process.n_y());
    let t_w = schedule.t_w();
    let total = schedule.total_steps();
    let h = cfg.h;
    let phi_dim = (n_y + n_u) * h;
    let (d1, d2) = default_hankel_split(h);
    let naive_sched = NaiveSchedule::new(cfg.gamma)?;

    let mut trace = RunTrace::with_capacity(
        cfg.algorithm,
        cfg.seed,
        j_star,
        n_y,
        n_u,
        total as usize,
    );
    let mut history: Vec<(DVector<f64>, DVector<f64>)> = Vec::with_capacity(total as usize);
    let mut moments = MomentAccumulator::new(phi_dim, n_y);
    let mut fim = FimAccumulator::new(phi_dim, n_y, cfg.alpha, cfg.c_tol)?;
    let mut warm_phis: Vec<DVector<f64>> = Vec::new();
    let mut fim_started = false;
    let mut cec: Option<CecController> = None;
    let mut optimal_filter = FilterState::new(n_x);
    let mut warned_truncation = false;

    if cfg.algorithm == Algorithm::Optimal && truth.optimal.is_none() {
        return Err(Error::Invalid {
            context: "optimal mode requires the true system and its gains".to_string(),
        });
    }

    for t in 0..total {
        *t_now = t;
        let episode = schedule.episode_of(t);
        *episode_now = episode;
        let y = process.observe()?;

        let mut lambda_min = f64::NAN;
        let mut lambda_fresh = false;
        let sigma_eta_sq;
        let u: DVector<f64>;

        match (cfg.algorithm, episode) {
            (Algorithm::Optimal, _) => {
                let (system, gains) = truth.optimal.expect("checked above");
                optimal_filter.measurement_update(system.c(), &gains.l, &y)?;
                u = -(&gains.k * optimal_filter.filtered());
                optimal_filter.time_update(system.a(), system.b(), &u)?;
                sigma_eta_sq = 0.0;
            }
            (_, None) => {
                // Warm-up: pure Gaussian excitation.
                if (t as usize) >= h {
                    let phi = build_regressor(&history, t, h)?;
                    moments.push(&phi, &y)?;
                    warm_phis.push(phi);
                }
                sigma_eta_sq = cfg.sigma_u_sq;
                u = standard_normal_vector(process.rng_mut(), n_u) * cfg.sigma_u_sq.sqrt();
            }
            (algo, Some(k)) => {
                // Re-estimate at episode starts; the no-update baseline only
                // estimates once, entering the adaptive phase.
                let reestimate = t == schedule.episode_start(k)
                    && (algo != Algorithm::CecOnly || k == 0);
                if reestimate {
                    let est = moments.estimate(cfg.lambda)?;
                    let model = ho_kalman(&est, n_x, h, d1, d2)?;
                    let abar_hat = &model.a_hat - &model.f_hat * &model.c_hat;
                    let mut power = DMatrix::identity(n_x, n_x);
                    for _ in 0..h {
                        power = &power * &abar_hat;
                    }
                    let bias = power.norm();
                    trace.truncation_bias_max = trace.truncation_bias_max.max(bias);
                    if bias > 1e-6 && !warned_truncation {
                        warned_truncation = true;
                        eprintln!(
                            "warning: ({} seed {}) ||Abar_hat^H|| = {bias:.3e} at episode {k}; \
                             the regression truncation bias may not be negligible at H = {h}",
                            cfg.algorithm, cfg.seed
                        );
                    }
                    let qc = model.c_hat.transpose() * cost.q() * &model.c_hat;
                    let (_, k_gain) =
                        control_riccati_gain(&model.a_hat, &model.b_hat, &qc, cost.r())?;
                    // An unstable certainty-equivalence loop is allowed to
                    // run; the divergence guard catches the fallout.
                    let _rho_cl =
                        spectral_radius(&(&model.a_hat - &model.b_hat * &k_gain))?;
                    cec = Some(CecController {
                        model,
                        k_gain,
                        filter: FilterState::new(n_x),
                    });
                }
                let ctrl = cec.as_mut().expect("estimated at episode 0 start");
                let y_pred = ctrl.filter.predicted_output(&ctrl.model.c_hat);
                ctrl.filter
                    .measurement_update(&ctrl.model.c_hat, &ctrl.model.l_hat, &y)?;

                let phi = build_regressor(&history, t, h)?;
                moments.push(&phi, &y)?;
                fim.update_innovation(&y, &y_pred)?;
                if !fim_started {
                    for wphi in warm_phis.drain(..) {
                        fim.update_fim(&wphi)?;
                    }
                    fim_started = true;
                }
                fim.update_fim(&phi)?;

                let steps_since = (t - t_w) as usize;
                if steps_since % cfg.lambda_min_stride == 0 {
                    lambda_min = fim.min_eig_tracked();
                    lambda_fresh = true;
                } else {
                    lambda_min = fim.latest_min_eig();
                }

                let l_k = schedule.episode_start(k);
                let (s_sq, using_fim) = match algo {
                    Algorithm::Naive => (naive_sigma(&naive_sched, l_k), false),
                    Algorithm::If2e => if2e_sigma(&mut fim, &naive_sched, l_k),
                    Algorithm::CecOnly => (0.0, false),
                    Algorithm::Optimal => unreachable!(),
                };
                if using_fim {
                    lambda_min = fim.latest_min_eig();
                    if trace.switch_step.is_none() {
                        trace.switch_step = Some(t - t_w + 1);
                    }
                }
                sigma_eta_sq = s_sq;

                let mut input = -(&ctrl.k_gain * ctrl.filter.filtered());
                if matches!(algo, Algorithm::Naive | Algorithm::If2e) {
                    let eta =
                        standard_normal_vector(process.rng_mut(), n_u) * s_sq.sqrt();
                    input += eta;
                }
                ctrl.filter
                    .time_update(&ctrl.model.a_hat, &ctrl.model.b_hat, &input)?;
                u = input;
            }
        }

        process.apply(&u)?;
        let c_t = stage_cost(&y, &u, cost)?;
        trace.episode.push(episode.map_or(-1, |k| k as i64));
        trace.cost.push(c_t);
        let prev = trace.regret.last().copied().unwrap_or(0.0);
        trace.regret.push(prev + (c_t - j_star));
        trace.sigma_eta_sq.push(sigma_eta_sq);
        trace.lambda_min.push(lambda_min);
        trace.lambda_fresh.push(lambda_fresh);
        trace.y.extend_from_slice(y.as_slice());
        trace.u.extend_from_slice(u.as_slice());
        history.push((y, u));

        if cfg.algorithm != Algorithm::Optimal && schedule.is_episode_end(t) && !moments.is_empty()
        {
            let est = moments.estimate(cfg.lambda)?;
            let merr = match truth.markov {
                Some(m) if cfg.oracle_diagnostics => Some(markov_error(&est, m)?),
                _ => None,
            };
            trace.episode_diag.push(EpisodeDiag {
                t,
                episode: schedule.episode_of(t).expect("episode end is adaptive"),
                min_sv_gram: min_sv_gram(&est),
                markov_error: merr,
            });
        }
    }
    Ok(trace)
}

/// Runs one full experiment on a freshly initialized plant, computing the
/// optimal cost and truth diagnostics from the true parameters.
pub fn run_full(
    system: &SystemParams,
    noise: &NoiseParams,
    cost: &CostParams,
    schedule: &EpisodeSchedule,
    cfg: &AlgoConfig,
) -> std::result::Result<RunTrace, RunFailure> {
    let config_failure = |error: Error| RunFailure {
        algorithm: cfg.algorithm,
        seed: cfg.seed,
        episode: None,
        t: None,
        error,
    };
    let gains = compute_gains(system, noise, cost).map_err(config_failure)?;
    let j_star = crate::filtering::optimal_cost(system, noise, cost).map_err(config_failure)?;
    let markov_truth = if cfg.oracle_diagnostics {
        Some(markov_from_params(system, &gains.f, cfg.h).map_err(config_failure)?)
    } else {
        None
    };
    let mut plant =
        Plant::init_steady_state(system.clone(), *noise, cfg.seed).map_err(config_failure)?;
    run_full_on(
        &mut plant,
        system.n_x(),
        cost,
        schedule,
        cfg,
        j_star,
        TruthRefs {
            optimal: Some((system, &gains)),
            markov: markov_truth.as_ref(),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn web_server() -> (SystemParams, NoiseParams, CostParams) {
        (
            SystemParams::new(
                DMatrix::from_row_slice(2, 2, &[0.54, -0.11, -0.026, 0.63]),
                DMatrix::from_row_slice(2, 2, &[-85e-4, 4.4e-4, -2.5e-4, 2.8e-4]),
                DMatrix::from_row_slice(2, 2, &[0.2, 0.3, 0.3, 0.2]),
            )
            .unwrap(),
            NoiseParams::new(0.1, 0.1).unwrap(),
            CostParams::new(
                DMatrix::from_row_slice(2, 2, &[5.0, 0.0, 0.0, 1.0]),
                DMatrix::from_row_slice(2, 2, &[1.0 / 2500.0, 0.0, 0.0, 1e-6]),
            )
            .unwrap(),
        )
    }

    fn paper_config(algorithm: Algorithm, seed: u64) -> AlgoConfig {
        AlgoConfig {
            algorithm,
            h: 12,
            lambda: 1e-3,
            gamma: 25f64.sqrt() / 10.0,
            alpha: 1.0,
            c_tol: 1.0,
            sigma_u_sq: 0.1,
            seed,
            lambda_min_stride: 1,
            oracle_diagnostics: true,
        }
    }

    #[test]
    fn schedule_arithmetic() {
        let s = EpisodeSchedule::new(25, 11).unwrap();
        assert_eq!(s.total_steps(), 51_200);
        assert_eq!(s.episode_start(0), 25);
        assert_eq!(s.episode_start(3), 200);
        assert_eq!(s.episode_of(24), None);
        assert_eq!(s.episode_of(25), Some(0));
        assert_eq!(s.episode_of(49), Some(0));
        assert_eq!(s.episode_of(50), Some(1));
        assert_eq!(s.episode_of(51_199), Some(10));
        assert!(s.is_episode_end(49));
        assert!(s.is_episode_end(51_199));
        assert!(!s.is_episode_end(50));
        assert!(!s.is_episode_end(24));
    }

    #[test]
    fn regret_examples() {
        assert_eq!(cumulative_regret(&[2.0, 3.0], 1.0), vec![1.0, 3.0]);
        let flat = cumulative_regret(&[0.5, 0.5, 0.5], 0.5);
        for r in flat {
            assert_relative_eq!(r, 0.0);
        }
    }

    #[test]
    fn warmup_only_schedule_runs_warmup_steps() {
        let (system, noise, cost) = web_server();
        let schedule = EpisodeSchedule::new(25, 0).unwrap();
        let cfg = paper_config(Algorithm::Naive, 7);
        let trace = run_full(&system, &noise, &cost, &schedule, &cfg).unwrap();
        assert_eq!(trace.len(), 25);
        assert!(trace.episode.iter().all(|&e| e == -1));
        assert!(trace.episode_diag.is_empty());
    }

    #[test]
    fn zero_noise_zero_input_warmup_is_all_zero() {
        let (system, _, cost) = web_server();
        let noise = NoiseParams::unchecked(0.0, 0.0);
        let mut plant = Plant::from_state(
            system.clone(),
            noise,
            DVector::zeros(2),
            3,
        )
        .unwrap();
        let schedule = EpisodeSchedule::new(25, 0).unwrap();
        let mut cfg = paper_config(Algorithm::Naive, 3);
        cfg.sigma_u_sq = 1e-300; // structurally positive, numerically nil
        let trace = run_full_on(
            &mut plant,
            2,
            &cost,
            &schedule,
            &cfg,
            0.0,
            TruthRefs {
                optimal: None,
                markov: None,
            },
        )
        .unwrap();
        assert!(trace.cost.iter().all(|&c| c < 1e-200));
        assert!(trace.y.iter().all(|&v| v.abs() < 1e-100));
    }

    #[test]
    fn naive_exploration_variance_constant_within_episode() {
        let (system, noise, cost) = web_server();
        let schedule = EpisodeSchedule::new(25, 3).unwrap();
        let cfg = paper_config(Algorithm::Naive, 11);
        let trace = run_full(&system, &noise, &cost, &schedule, &cfg).unwrap();
        let gamma = cfg.gamma;
        for t in 0..trace.len() {
            match trace.episode[t] {
                -1 => assert_relative_eq!(trace.sigma_eta_sq[t], cfg.sigma_u_sq),
                k => {
                    let l_k = schedule.episode_start(k as u32);
                    assert_relative_eq!(
                        trace.sigma_eta_sq[t],
                        gamma / (l_k as f64).sqrt(),
                        epsilon = 1e-15
                    );
                }
            }
        }
        // Strictly decreasing across episodes.
        let mut per_episode: Vec<f64> = Vec::new();
        for t in 0..trace.len() {
            let k = trace.episode[t];
            if k >= 0 && per_episode.len() == k as usize {
                per_episode.push(trace.sigma_eta_sq[t]);
            }
        }
        for w in per_episode.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn warmup_inputs_have_configured_variance() {
        let (system, noise, cost) = web_server();
        let schedule = EpisodeSchedule::new(25, 0).unwrap();
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        let mut n = 0usize;
        for seed in 0..200 {
            let cfg = paper_config(Algorithm::Naive, seed);
            let trace = run_full(&system, &noise, &cost, &schedule, &cfg).unwrap();
            for v in &trace.u {
                sum += v;
                sumsq += v * v;
                n += 1;
            }
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "warm-up input mean {mean}");
        assert!((var - 0.1).abs() < 0.01, "warm-up input variance {var}");
    }

    #[test]
    fn regret_matches_recomputation_and_costs() {
        let (system, noise, cost) = web_server();
        let schedule = EpisodeSchedule::new(25, 2).unwrap();
        let cfg = paper_config(Algorithm::Naive, 5);
        let trace = run_full(&system, &noise, &cost, &schedule, &cfg).unwrap();
        let recomputed = cumulative_regret(&trace.cost, trace.j_star);
        for (a, b) in trace.regret.iter().zip(&recomputed) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn identical_seeds_give_identical_traces() {
        let (system, noise, cost) = web_server();
        let schedule = EpisodeSchedule::new(25, 2).unwrap();
        let cfg = paper_config(Algorithm::If2e, 9);
        let a = run_full(&system, &noise, &cost, &schedule, &cfg).unwrap();
        let b = run_full(&system, &noise, &cost, &schedule, &cfg).unwrap();
        assert_eq!(a.y, b.y);
        assert_eq!(a.u, b.u);
        assert_eq!(a.cost, b.cost);
        assert_eq!(a.switch_step, b.switch_step);
    }

    #[test]
    fn naive_and_if2e_share_trajectory_until_switch() {
        let (system, noise, cost) = web_server();
        let schedule = EpisodeSchedule::new(25, 4).unwrap();
        let naive = run_full(&system, &noise, &cost, &schedule, &paper_config(Algorithm::Naive, 2))
            .unwrap();
        let if2e = run_full(&system, &noise, &cost, &schedule, &paper_config(Algorithm::If2e, 2))
            .unwrap();
        let switch_abs = if2e
            .switch_step
            .map(|s| (s - 1 + schedule.t_w()) as usize)
            .unwrap_or(if2e.len());
        assert!(switch_abs > schedule.t_w() as usize);
        for t in 0..switch_abs {
            assert_eq!(naive.y_at(t), if2e.y_at(t), "outputs differ at t = {t}");
            assert_eq!(naive.u_at(t), if2e.u_at(t), "inputs differ at t = {t}");
        }
        if switch_abs < naive.len() {
            let diverged = (switch_abs..naive.len())
                .any(|t| naive.u_at(t) != if2e.u_at(t));
            assert!(diverged, "policies never diverged after the switch");
        }
    }

    #[test]
    fn episode_diagnostics_are_recorded_at_episode_ends() {
        let (system, noise, cost) = web_server();
        let schedule = EpisodeSchedule::new(25, 3).unwrap();
        let cfg = paper_config(Algorithm::Naive, 13);
        let trace = run_full(&system, &noise, &cost, &schedule, &cfg).unwrap();
        assert_eq!(trace.episode_diag.len(), 3);
        for (k, diag) in trace.episode_diag.iter().enumerate() {
            assert_eq!(diag.episode, k as u32);
            assert_eq!(diag.t + 1, schedule.episode_start(k as u32 + 1));
            assert!(diag.min_sv_gram >= 0.0);
            assert!(diag.markov_error.is_some());
        }
    }

    #[test]
    fn cec_only_never_explores() {
        let (system, noise, cost) = web_server();
        let schedule = EpisodeSchedule::new(25, 3).unwrap();
        let cfg = paper_config(Algorithm::CecOnly, 17);
        let trace = run_full(&system, &noise, &cost, &schedule, &cfg).unwrap();
        for t in schedule.t_w() as usize..trace.len() {
            assert_eq!(trace.sigma_eta_sq[t], 0.0);
        }
        assert!(trace.switch_step.is_none());
    }

    #[test]
    fn optimal_mode_tracks_j_star() {
        let (system, noise, cost) = web_server();
        let schedule = EpisodeSchedule::new(25, 7).unwrap(); // 3200 steps
        let cfg = paper_config(Algorithm::Optimal, 23);
        let trace = run_full(&system, &noise, &cost, &schedule, &cfg).unwrap();
        assert!(trace.switch_step.is_none());
        assert!(trace.lambda_min.iter().all(|v| v.is_nan()));
        // Loose sanity band; the acceptance suite does the statistical test.
        assert!(
            (trace.avg_cost() - trace.j_star).abs() < 0.3 * trace.j_star,
            "avg cost {} vs J* {}",
            trace.avg_cost(),
            trace.j_star
        );
    }

    #[test]
    fn lambda_min_is_monotone_and_stride_marks_freshness() {
        let (system, noise, cost) = web_server();
        let schedule = EpisodeSchedule::new(25, 4).unwrap();
        let mut cfg = paper_config(Algorithm::Naive, 29);
        cfg.lambda_min_stride = 4;
        let trace = run_full(&system, &noise, &cost, &schedule, &cfg).unwrap();
        let mut last: f64 = 0.0;
        for t in 0..trace.len() {
            let lm = trace.lambda_min[t];
            if trace.episode[t] < 0 {
                assert!(lm.is_nan());
                continue;
            }
            assert!(lm >= last - 1e-9 * last.max(1.0), "lambda_min decreased");
            if trace.lambda_fresh[t] {
                last = lm;
            } else {
                assert_eq!(lm, last, "held value must repeat the last fresh one");
            }
        }
        let fresh_count = trace.lambda_fresh.iter().filter(|&&f| f).count();
        let adaptive_steps = trace.episode.iter().filter(|&&e| e >= 0).count();
        assert_eq!(fresh_count, adaptive_steps.div_ceil(4));
    }
}
