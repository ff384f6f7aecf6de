//! The `oracle` subcommand: independent reference computations cross-check
//! the main numerical paths on the configured system, printing one pass/fail
//! line per check.

use nalgebra::{DMatrix, DVector};

use lqg_core::control_math::{
    dlyap, solve_control_dare, solve_filter_dare, spectral_norm, standard_normal_vector,
    DEFAULT_DARE_MAX_ITER, DEFAULT_DARE_TOL,
};
use lqg_core::exploration::FimAccumulator;
use lqg_core::filtering::{compute_gains, optimal_cost, FilterState};
use lqg_core::oracle;
use lqg_core::plant::{NoiseParams, Plant, Process, SystemParams};
use lqg_core::sysid::{
    build_regressor, default_hankel_split, ho_kalman, markov_error, markov_from_params,
    min_sv_gram, rls_markov, MarkovEstimate,
};

use crate::config::ExperimentConfig;

struct Check {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check {
        name,
        passed,
        detail,
    }
}

/// Runs the self-check battery; returns true when every check passed.
pub fn run_oracle_checks(config: &ExperimentConfig) -> bool {
    let scenario = &config.scenario;
    let system = &scenario.system;
    let noise = &scenario.noise;
    let cost = &scenario.cost;
    let mut checks: Vec<Check> = Vec::new();

    // Riccati residual contracts on the configured system.
    {
        let qc = system.c().transpose() * cost.q() * system.c();
        match solve_control_dare(
            system.a(),
            system.b(),
            &qc,
            cost.r(),
            DEFAULT_DARE_TOL,
            DEFAULT_DARE_MAX_ITER,
        ) {
            Ok(sol) => {
                let rel = sol.residual_norm / (1.0 + sol.value.norm());
                checks.push(check(
                    "control DARE residual",
                    rel <= 1e-10,
                    format!("relative residual {rel:.3e} after {} sweeps", sol.iterations),
                ));
            }
            Err(e) => checks.push(check("control DARE residual", false, e.to_string())),
        }
        match solve_filter_dare(
            system.a(),
            system.c(),
            noise.sigma_w(),
            noise.sigma_z(),
            DEFAULT_DARE_TOL,
            DEFAULT_DARE_MAX_ITER,
        ) {
            Ok(sol) => {
                let rel = sol.residual_norm / (1.0 + sol.value.norm());
                checks.push(check(
                    "filter DARE residual",
                    rel <= 1e-10,
                    format!("relative residual {rel:.3e}"),
                ));
            }
            Err(e) => checks.push(check("filter DARE residual", false, e.to_string())),
        }
    }

    // Scalar fixed-point oracle agreement.
    {
        let p_oracle = oracle::scalar_control_dare(0.5, 1.0, 1.0, 1.0);
        let sol = solve_control_dare(
            &DMatrix::from_element(1, 1, 0.5),
            &DMatrix::identity(1, 1),
            &DMatrix::identity(1, 1),
            &DMatrix::identity(1, 1),
            1e-13,
            100_000,
        );
        let passed = sol
            .as_ref()
            .map(|s| (s.value[(0, 0)] - p_oracle).abs() < 1e-11)
            .unwrap_or(false);
        checks.push(check(
            "scalar DARE vs fixed-point oracle",
            passed,
            format!("oracle {p_oracle:.12}"),
        ));
    }

    // Lyapunov solver vs truncated series on the configured dynamics.
    {
        let y = DMatrix::identity(system.n_x(), system.n_x());
        match dlyap(&system.a().transpose(), &y, 1e-13) {
            Ok(s) => {
                let series = oracle::dlyap_series(&system.a().transpose(), &y, 2000);
                let err = (&s - &series).norm() / (1.0 + series.norm());
                checks.push(check(
                    "dlyap vs series oracle",
                    err <= 1e-10,
                    format!("relative gap {err:.3e}"),
                ));
            }
            Err(e) => checks.push(check("dlyap vs series oracle", false, e.to_string())),
        }
    }

    // Optimal cost: closed form vs the independent Lyapunov route.
    {
        match (optimal_cost(system, noise, cost), compute_gains(system, noise, cost)) {
            (Ok(j), Ok(gains)) => {
                match oracle::lyapunov_route_cost(system, noise, cost, &gains.k, &gains.l) {
                    Ok(j_lyap) => {
                        let gap = (j - j_lyap).abs() / j.abs().max(1e-12);
                        checks.push(check(
                            "optimal cost vs Lyapunov route",
                            gap <= 1e-8,
                            format!("closed form {j:.6}, Lyapunov route {j_lyap:.6}"),
                        ));
                    }
                    Err(e) => checks.push(check("optimal cost vs Lyapunov route", false, e.to_string())),
                }
            }
            (a, b) => checks.push(check(
                "optimal cost vs Lyapunov route",
                false,
                format!("{:?} / {:?}", a.err(), b.err()),
            )),
        }
    }

    // Ho-Kalman round-trip on the configured system and on random systems.
    {
        let h = scenario.h;
        let (d1, d2) = default_hankel_split(h);
        let mut passed = true;
        let mut worst = 0.0f64;
        match compute_gains(system, noise, cost) {
            Ok(gains) => {
                let m = markov_from_params(system, &gains.f, h).expect("dims");
                let me = MarkovEstimate {
                    m_hat: m.clone(),
                    v: DMatrix::identity(m.ncols(), m.ncols()),
                    lambda: 1e-12,
                    n_samples: 1,
                };
                match ho_kalman(&me, system.n_x(), h, d1, d2) {
                    Ok(model) => {
                        let back = markov_from_params(
                            &model.params().expect("dims"),
                            &model.f_hat,
                            h,
                        )
                        .expect("dims");
                        worst = worst.max(spectral_norm(&(&back - &m)));
                    }
                    Err(e) => {
                        passed = false;
                        worst = f64::NAN;
                        eprintln!("configured-system realization failed: {e}");
                    }
                }
            }
            Err(e) => {
                passed = false;
                eprintln!("gains failed: {e}");
            }
        }
        let mut rng = oracle::seeded_rng(2024);
        for trial in 0..20 {
            let n_x = 2 + trial % 3;
            let sys = oracle::random_predictor_system(n_x, 2, 2, 0.8, &mut rng);
            let m = markov_from_params(&sys.params, &sys.f_gain, 12).expect("dims");
            let me = MarkovEstimate {
                m_hat: m.clone(),
                v: DMatrix::identity(m.ncols(), m.ncols()),
                lambda: 1e-12,
                n_samples: 1,
            };
            match ho_kalman(&me, n_x, 12, 6, 5) {
                Ok(model) => {
                    let back =
                        markov_from_params(&model.params().expect("dims"), &model.f_hat, 12)
                            .expect("dims");
                    worst = worst.max(spectral_norm(&(&back - &m)));
                }
                Err(e) => {
                    passed = false;
                    eprintln!("random realization {trial} failed: {e}");
                }
            }
        }
        checks.push(check(
            "Ho-Kalman Markov round-trip",
            passed && worst < 1e-8,
            format!("worst spectral error {worst:.3e} over 21 systems"),
        ));
    }

    // Ridge regression against exactly realizable targets.
    {
        let mut rng = oracle::seeded_rng(7);
        let sys = oracle::random_predictor_system(2, 1, 1, 0.5, &mut rng);
        let h = 45;
        let m_true = markov_from_params(&sys.params, &sys.f_gain, h).expect("dims");
        let abar = sys.params.a() - &sys.f_gain * sys.params.c();
        let mut xs = DVector::zeros(2);
        let mut history: Vec<(DVector<f64>, DVector<f64>)> = Vec::new();
        let mut phis = Vec::new();
        let mut targets = Vec::new();
        for t in 0..600u64 {
            let y_pred = sys.params.c() * &xs;
            let e = standard_normal_vector(&mut rng, 1) * 0.5;
            let y = &y_pred + e;
            let u = standard_normal_vector(&mut rng, 1);
            if t as usize >= h {
                phis.push(build_regressor(&history, t, h).expect("enough history"));
                targets.push(y_pred.clone());
            }
            xs = &abar * &xs + sys.params.b() * &u + &sys.f_gain * &y;
            history.push((y, u));
        }
        match rls_markov(&phis, &targets, 1e-12) {
            Ok(est) => {
                let err = markov_error(&est, &m_true).expect("dims");
                let gram_ok = min_sv_gram(&est) > 1.0;
                checks.push(check(
                    "ridge regression vs exact Markov block",
                    err < 1e-8 && gram_ok,
                    format!("error {err:.3e}, min Gram singular value {:.3e}", min_sv_gram(&est)),
                ));
            }
            Err(e) => checks.push(check(
                "ridge regression vs exact Markov block",
                false,
                e.to_string(),
            )),
        }
    }

    // Estimated information matrix vs a Monte-Carlo evaluation of the
    // expected information under a fixed policy on a scalar-output system.
    {
        let result = fim_monte_carlo_check(10_000);
        match result {
            Ok((rel, ok)) => checks.push(check(
                "information matrix vs Monte-Carlo expectation",
                ok,
                format!("relative gap {rel:.3}"),
            )),
            Err(e) => checks.push(check(
                "information matrix vs Monte-Carlo expectation",
                false,
                e,
            )),
        }
    }

    let mut all_ok = true;
    for c in &checks {
        println!(
            "{}: {} ({})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
        all_ok &= c.passed;
    }
    all_ok
}

/// Time-averaged estimated information of one long run under a fixed linear
/// policy, against the Monte-Carlo ensemble expectation. Returns the
/// relative Frobenius gap and whether it is within 10%.
pub fn fim_monte_carlo_check(replications: usize) -> Result<(f64, bool), String> {
    let system = SystemParams::new(
        DMatrix::from_element(1, 1, 0.5),
        DMatrix::identity(1, 1),
        DMatrix::identity(1, 1),
    )
    .map_err(|e| e.to_string())?;
    let noise = NoiseParams::new(0.1, 0.1).map_err(|e| e.to_string())?;
    let cost = lqg_core::plant::CostParams::new(DMatrix::identity(1, 1), DMatrix::identity(1, 1))
        .map_err(|e| e.to_string())?;
    let gains = compute_gains(&system, &noise, &cost).map_err(|e| e.to_string())?;
    let h = 3;
    let sigma_eta_sq: f64 = 0.05;
    let burn_in = 60;

    // One long trajectory, accumulating the running estimate with the true
    // innovation stream.
    let steps = 20_000u64;
    let mut plant = Plant::init_steady_state(system.clone(), noise, 99).map_err(|e| e.to_string())?;
    let mut fs = FilterState::new(1);
    let mut history: Vec<(DVector<f64>, DVector<f64>)> = Vec::new();
    let mut acc = FimAccumulator::new(2 * h, 1, 1.0, 1.0).map_err(|e| e.to_string())?;
    let mut n_terms = 0usize;
    for t in 0..steps {
        let y = plant.observe().map_err(|e| e.to_string())?;
        let y_pred = fs.predicted_output(system.c());
        acc.update_innovation(&y, &y_pred).map_err(|e| e.to_string())?;
        if t as usize >= burn_in + h {
            let phi = build_regressor(&history, t, h).map_err(|e| e.to_string())?;
            acc.update_fim(&phi).map_err(|e| e.to_string())?;
            n_terms += 1;
        }
        fs.measurement_update(system.c(), &gains.l, &y)
            .map_err(|e| e.to_string())?;
        let eta = standard_normal_vector(plant.rng_mut(), 1) * sigma_eta_sq.sqrt();
        let u = -(&gains.k * fs.filtered()) + eta;
        plant.apply(&u).map_err(|e| e.to_string())?;
        fs.time_update(system.a(), system.b(), &u)
            .map_err(|e| e.to_string())?;
        history.push((y, u));
    }
    let time_avg = acc.kron_sum() / n_terms as f64;

    let policy = oracle::FixedPolicy {
        system: &system,
        noise: &noise,
        k_gain: &gains.k,
        l_gain: &gains.l,
        sigma_eta_sq,
        h,
    };
    let mc = oracle::monte_carlo_expected_fim(&policy, replications, burn_in, 31_000)
        .map_err(|e| e.to_string())?;
    let rel = (&time_avg - &mc).norm() / mc.norm();
    Ok((rel, rel < 0.10))
}
