//! Simulation of the true partially observed linear system
//! `x_{t+1} = A x_t + B u_t + w_t`, `y_t = C x_t + z_t`, with steady-state
//! initialization and the quadratic stage cost.
//!
//! Each step draws exactly two Gaussian vectors in a fixed order (process
//! noise first, then measurement noise), so trajectories for a given seed do
//! not depend on what the controller does in between.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::control_math::{
    self, ensure_finite, ensure_finite_vec, numerical_rank, sample_gaussian, spectral_radius,
    standard_normal_vector, DEFAULT_DARE_MAX_ITER, DEFAULT_DARE_TOL,
};
use crate::error::{Error, Result};

/// State norm beyond which a run is declared diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e9;

/// The model parameter (A, B, C) of a linear system.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
}

impl SystemParams {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: format!("A must be square, got {}x{}", a.nrows(), a.ncols()),
            });
        }
        if b.nrows() != n {
            return Err(Error::DimensionMismatch {
                context: format!("B has {} rows but A is {n}x{n}", b.nrows()),
            });
        }
        if c.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: format!("C has {} cols but A is {n}x{n}", c.ncols()),
            });
        }
        ensure_finite(&a, "system A")?;
        ensure_finite(&b, "system B")?;
        ensure_finite(&c, "system C")?;
        Ok(Self { a, b, c })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn n_x(&self) -> usize {
        self.a.nrows()
    }
    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }
    pub fn n_y(&self) -> usize {
        self.c.nrows()
    }

    /// Checks the standing assumptions for a true experiment system:
    /// Schur-stable A, controllable (A, B), observable (A, C).
    pub fn check_assumptions(&self) -> Result<()> {
        let mut failures = Vec::new();
        let rho = spectral_radius(&self.a)?;
        if rho >= 1.0 {
            failures.push(format!("A is not Schur stable (rho = {rho:.6})"));
        }
        let ctrb = control_math::controllability_matrix(&self.a, &self.b)?;
        if numerical_rank(&ctrb) < self.n_x() {
            failures.push("(A, B) is not controllable".to_string());
        }
        let obsv = control_math::observability_matrix(&self.a, &self.c)?;
        if numerical_rank(&obsv) < self.n_x() {
            failures.push("(A, C) is not observable".to_string());
        }
        if failures.is_empty() {
            Ok(())
        } else {
            Err(Error::AssumptionViolated { failures })
        }
    }
}

/// Process and measurement noise standard deviations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    sigma_w: f64,
    sigma_z: f64,
}

impl NoiseParams {
    pub fn new(sigma_w: f64, sigma_z: f64) -> Result<Self> {
        if sigma_w > 0.0 && sigma_z > 0.0 && sigma_w.is_finite() && sigma_z.is_finite() {
            Ok(Self { sigma_w, sigma_z })
        } else {
            Err(Error::InvalidNoise { sigma_w, sigma_z })
        }
    }

    /// Test-only constructor that permits zero noise for deterministic
    /// oracles; the regular constructor rejects it.
    pub fn unchecked(sigma_w: f64, sigma_z: f64) -> Self {
        Self { sigma_w, sigma_z }
    }

    pub fn sigma_w(&self) -> f64 {
        self.sigma_w
    }
    pub fn sigma_z(&self) -> f64 {
        self.sigma_z
    }
}

/// Quadratic stage-cost weights; both must be symmetric positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct CostParams {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

fn check_spd(m: &DMatrix<f64>, name: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            context: format!("{name} must be square"),
        });
    }
    let asym = (m - m.transpose()).norm();
    if asym > 1e-10 * (1.0 + m.norm()) {
        return Err(Error::Invalid {
            context: format!("{name} must be symmetric"),
        });
    }
    if nalgebra::Cholesky::new(m.clone()).is_none() {
        return Err(Error::Invalid {
            context: format!("{name} must be positive definite"),
        });
    }
    Ok(())
}

impl CostParams {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        ensure_finite(&q, "cost Q")?;
        ensure_finite(&r, "cost R")?;
        check_spd(&q, "Q")?;
        check_spd(&r, "R")?;
        Ok(Self { q, r })
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }
    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }
}

/// `yᵀQy + uᵀRu`.
pub fn stage_cost(y: &DVector<f64>, u: &DVector<f64>, cost: &CostParams) -> Result<f64> {
    if y.len() != cost.q.nrows() || u.len() != cost.r.nrows() {
        return Err(Error::DimensionMismatch {
            context: format!(
                "stage cost: y has {} entries (Q is {}x{}), u has {} (R is {}x{})",
                y.len(),
                cost.q.nrows(),
                cost.q.ncols(),
                u.len(),
                cost.r.nrows(),
                cost.r.ncols()
            ),
        });
    }
    Ok((y.transpose() * &cost.q * y)[(0, 0)] + (u.transpose() * &cost.r * u)[(0, 0)])
}

/// Anything the adaptive loop can observe and actuate. The simulated plant is
/// the production implementation; tests substitute replay stubs.
pub trait Process {
    /// Emits `y_t` for the current step. The first call at a given step draws
    /// the step's process and measurement noise; repeated calls return the
    /// same observation.
    fn observe(&mut self) -> Result<DVector<f64>>;
    /// Applies `u_t` and advances to step t+1. Requires a prior `observe`.
    fn apply(&mut self, u: &DVector<f64>) -> Result<()>;
    /// The run's single seeded generator; exploration and warm-up inputs are
    /// drawn from it after the plant noise of the step.
    fn rng_mut(&mut self) -> &mut ChaCha8Rng;
    fn n_u(&self) -> usize;
    fn n_y(&self) -> usize;
    fn time(&self) -> u64;
}

/// The simulated true system.
#[derive(Debug, Clone)]
pub struct Plant {
    params: SystemParams,
    noise: NoiseParams,
    x: DVector<f64>,
    t: u64,
    rng: ChaCha8Rng,
    pending: Option<(DVector<f64>, DVector<f64>)>, // (w_t, y_t)
}

impl Plant {
    /// Starts the plant at its steady state `x_0 ~ N(0, Σ)` where Σ solves
    /// the filter DARE of (A, C) with the configured noise.
    pub fn init_steady_state(
        params: SystemParams,
        noise: NoiseParams,
        seed: u64,
    ) -> Result<Self> {
        params.check_assumptions()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = if noise.sigma_w == 0.0 && noise.sigma_z == 0.0 {
            // Zero-noise test mode: steady state collapses to the origin.
            DVector::zeros(params.n_x())
        } else {
            let sigma = control_math::solve_filter_dare(
                &params.a,
                &params.c,
                noise.sigma_w,
                noise.sigma_z,
                DEFAULT_DARE_TOL,
                DEFAULT_DARE_MAX_ITER,
            )?;
            sample_gaussian(&DVector::zeros(params.n_x()), &sigma.value, &mut rng)?
        };
        Ok(Self {
            params,
            noise,
            x,
            t: 0,
            rng,
            pending: None,
        })
    }

    /// Test constructor with an explicit initial state; does not enforce the
    /// experiment assumptions.
    pub fn from_state(
        params: SystemParams,
        noise: NoiseParams,
        x0: DVector<f64>,
        seed: u64,
    ) -> Result<Self> {
        if x0.len() != params.n_x() {
            return Err(Error::DimensionMismatch {
                context: format!("x0 has {} entries, n_x = {}", x0.len(), params.n_x()),
            });
        }
        Ok(Self {
            params,
            noise,
            x: x0,
            t: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            pending: None,
        })
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn state(&self) -> &DVector<f64> {
        &self.x
    }

    /// Convenience composition of `observe` and `apply`: emits `y_t` for the
    /// current state, then advances with the supplied input.
    pub fn step(&mut self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let y = self.observe()?;
        self.apply(u)?;
        Ok(y)
    }
}

impl Process for Plant {
    fn observe(&mut self) -> Result<DVector<f64>> {
        if let Some((_, y)) = &self.pending {
            return Ok(y.clone());
        }
        // Fixed order: w_t first, then z_t.
        let w = standard_normal_vector(&mut self.rng, self.params.n_x()) * self.noise.sigma_w;
        let z = standard_normal_vector(&mut self.rng, self.params.n_y()) * self.noise.sigma_z;
        let y = &self.params.c * &self.x + z;
        self.pending = Some((w, y.clone()));
        Ok(y)
    }

    fn apply(&mut self, u: &DVector<f64>) -> Result<()> {
        if u.len() != self.params.n_u() {
            return Err(Error::DimensionMismatch {
                context: format!("input has {} entries, n_u = {}", u.len(), self.params.n_u()),
            });
        }
        ensure_finite_vec(u, "plant input")?;
        let (w, _) = self.pending.take().ok_or_else(|| Error::Invalid {
            context: "apply called without observing the current step".to_string(),
        })?;
        self.x = &self.params.a * &self.x + &self.params.b * u + w;
        self.t += 1;
        let norm = self.x.norm();
        if norm > DIVERGENCE_LIMIT {
            return Err(Error::Diverged { norm, t: self.t });
        }
        Ok(())
    }

    fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    fn n_u(&self) -> usize {
        self.params.n_u()
    }

    fn n_y(&self) -> usize {
        self.params.n_y()
    }

    fn time(&self) -> u64 {
        self.t
    }
}
