//! Exploration-signal generation: the naive decaying-covariance schedule and
//! the Fisher-information-driven schedule with online innovation-covariance
//! estimation.
//!
//! The estimated information matrix accumulates `φφᵀ ⊗ Σ̂_e⁻¹` per step. Its
//! minimum eigenvalue gates and scales the information-driven exploration;
//! because the increments are PSD it is nondecreasing over a run.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Decaying naive exploration schedule with variance `γ/√l_k`.
#[derive(Debug, Clone, Copy)]
pub struct NaiveSchedule {
    pub gamma: f64,
}

impl NaiveSchedule {
    pub fn new(gamma: f64) -> Result<Self> {
        if gamma > 0.0 && gamma.is_finite() {
            Ok(Self { gamma })
        } else {
            Err(Error::Invalid {
                context: format!("naive exploration gamma must be positive, got {gamma}"),
            })
        }
    }
}

/// Exploration variance `σ²_η = γ/√l_k` for an episode of length `l_k`.
pub fn naive_sigma(schedule: &NaiveSchedule, l_k: u64) -> f64 {
    schedule.gamma / (l_k as f64).sqrt()
}

/// Rebuild the Cholesky factor from scratch after this many incremental
/// rank-one updates, to wash out accumulated drift.
const FACTOR_REFRESH_EVERY: usize = 512;
/// Cross-check the warm-started minimum eigenvalue against a direct
/// symmetric eigensolve after this many tracked evaluations.
const TRACKED_VALIDATE_EVERY: usize = 1024;
/// Agreement required between the warm-started and direct eigenvalues.
const TRACKED_MATCH_TOL: f64 = 1e-8;

/// Running estimated Fisher information `Σ φᵢφᵢᵀ ⊗ Σ̂_{e,i}⁻¹` together with
/// the running innovation covariance and the exploration gate state.
#[derive(Debug, Clone)]
pub struct FimAccumulator {
    kron_sum: DMatrix<f64>,
    innov_sum: DMatrix<f64>,
    innov_count: usize,
    alpha: f64,
    c_tol: f64,
    switched: bool,
    latest_min_eig: f64,
    // Warm-start state for the incremental minimum-eigenvalue tracker.
    factor: Option<Cholesky<f64, Dyn>>,
    eig_vec: Option<DVector<f64>>,
    updates_since_refresh: usize,
    tracked_since_validate: usize,
}

impl FimAccumulator {
    pub fn new(phi_dim: usize, n_y: usize, alpha: f64, c_tol: f64) -> Result<Self> {
        if alpha <= 0.0 || c_tol <= 0.0 {
            return Err(Error::Invalid {
                context: format!("alpha and c_tol must be positive (alpha = {alpha}, c_tol = {c_tol})"),
            });
        }
        Ok(Self {
            kron_sum: DMatrix::zeros(phi_dim * n_y, phi_dim * n_y),
            innov_sum: DMatrix::zeros(n_y, n_y),
            innov_count: 0,
            alpha,
            c_tol,
            switched: false,
            latest_min_eig: 0.0,
            factor: None,
            eig_vec: None,
            updates_since_refresh: 0,
            tracked_since_validate: 0,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn c_tol(&self) -> f64 {
        self.c_tol
    }

    pub fn switched(&self) -> bool {
        self.switched
    }

    pub fn innov_count(&self) -> usize {
        self.innov_count
    }

    pub fn kron_sum(&self) -> &DMatrix<f64> {
        &self.kron_sum
    }

    /// Most recently computed minimum eigenvalue; steps between stride points
    /// carry this value forward.
    pub fn latest_min_eig(&self) -> f64 {
        self.latest_min_eig
    }

    /// Accumulates one prediction residual `y - ŷ_{t|t-1}` into the running
    /// innovation covariance.
    pub fn update_innovation(&mut self, y: &DVector<f64>, y_pred: &DVector<f64>) -> Result<()> {
        if y.len() != self.innov_sum.nrows() || y_pred.len() != y.len() {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "innovation update: y has {} entries, prediction {}, expected {}",
                    y.len(),
                    y_pred.len(),
                    self.innov_sum.nrows()
                ),
            });
        }
        let e = y - y_pred;
        self.innov_sum.syger(1.0, &e, &e, 1.0);
        self.innov_count += 1;
        Ok(())
    }

    /// Running innovation covariance `Σ̂_e = innov_sum / innov_count`, if any
    /// residuals have been recorded.
    pub fn innovation_covariance(&self) -> Option<DMatrix<f64>> {
        if self.innov_count == 0 {
            return None;
        }
        let n = self.innov_sum.nrows();
        let mut s = self.innov_sum.clone();
        for i in 0..n {
            for j in (i + 1)..n {
                s[(i, j)] = s[(j, i)];
            }
        }
        Some(s / self.innov_count as f64)
    }

    fn sigma_e_inverse(&self) -> Result<DMatrix<f64>> {
        let sigma_e = self
            .innovation_covariance()
            .ok_or(Error::SingularInnovation)?;
        let n = sigma_e.nrows();
        if let Some(chol) = Cholesky::new(sigma_e.clone()) {
            return Ok(chol.inverse());
        }
        let jitter = 1e-8 * sigma_e.trace() / n as f64;
        let jittered = &sigma_e + DMatrix::identity(n, n) * jitter;
        Cholesky::new(jittered)
            .map(|c| c.inverse())
            .ok_or(Error::SingularInnovation)
    }

    /// Adds `φφᵀ ⊗ Σ̂_e⁻¹` for the current innovation-covariance estimate.
    pub fn update_fim(&mut self, phi: &DVector<f64>) -> Result<()> {
        let n_y = self.innov_sum.nrows();
        let phi_dim = self.kron_sum.nrows() / n_y;
        if phi.len() != phi_dim {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "fim update: phi has {} entries, expected {phi_dim}",
                    phi.len()
                ),
            });
        }
        let sigma_e_inv = self.sigma_e_inverse()?;

        for i in 0..phi_dim {
            if phi[i] == 0.0 {
                continue;
            }
            for j in 0..phi_dim {
                let pij = phi[i] * phi[j];
                if pij == 0.0 {
                    continue;
                }
                for a in 0..n_y {
                    for b in 0..n_y {
                        self.kron_sum[(i * n_y + a, j * n_y + b)] += pij * sigma_e_inv[(a, b)];
                    }
                }
            }
        }

        // Keep the incremental factor in sync: the increment decomposes into
        // n_y positive rank-one terms via the eigenpairs of Σ̂_e⁻¹.
        if let Some(factor) = self.factor.as_mut() {
            self.updates_since_refresh += 1;
            if self.updates_since_refresh >= FACTOR_REFRESH_EVERY {
                self.factor = Cholesky::new(self.kron_sum.clone());
                self.updates_since_refresh = 0;
            } else {
                let eig = SymmetricEigen::new(sigma_e_inv);
                for a in 0..n_y {
                    let lam = eig.eigenvalues[a];
                    if lam <= 0.0 {
                        continue;
                    }
                    let mut dir = DVector::zeros(phi_dim * n_y);
                    for i in 0..phi_dim {
                        for r in 0..n_y {
                            dir[i * n_y + r] = phi[i] * eig.eigenvectors[(r, a)];
                        }
                    }
                    factor.rank_one_update(&dir, lam);
                }
            }
        }
        Ok(())
    }

    /// Direct smallest eigenvalue of the accumulated information matrix.
    pub fn min_eig_direct(&self) -> f64 {
        let ev = self.kron_sum.symmetric_eigenvalues();
        ev.iter().copied().fold(f64::INFINITY, f64::min).min(f64::MAX)
    }

    fn seed_eigvec(&mut self) {
        let eig = SymmetricEigen::new(self.kron_sum.clone());
        let mut min_i = 0;
        for i in 1..eig.eigenvalues.len() {
            if eig.eigenvalues[i] < eig.eigenvalues[min_i] {
                min_i = i;
            }
        }
        self.eig_vec = Some(eig.eigenvectors.column(min_i).into_owned());
        self.latest_min_eig = eig.eigenvalues[min_i].max(0.0);
    }

    /// Warm-started smallest eigenvalue: inverse iteration on the maintained
    /// Cholesky factor, revalidated against the direct eigensolve at a fixed
    /// cadence. Falls back to the direct solve whenever the matrix is not yet
    /// positive definite or the iteration fails to certify its residual.
    pub fn min_eig_tracked(&mut self) -> f64 {
        if self.innov_count == 0 || self.kron_sum.iter().all(|&v| v == 0.0) {
            self.latest_min_eig = 0.0;
            return 0.0;
        }
        if self.factor.is_none() {
            match Cholesky::new(self.kron_sum.clone()) {
                Some(c) => {
                    self.factor = Some(c);
                    self.updates_since_refresh = 0;
                    self.seed_eigvec();
                    return self.latest_min_eig;
                }
                None => {
                    // Not yet positive definite: the smallest eigenvalue is
                    // zero up to roundoff.
                    let lm = self.min_eig_direct().max(0.0);
                    self.latest_min_eig = lm;
                    return lm;
                }
            }
        }

        if self.eig_vec.is_none() {
            self.seed_eigvec();
            return self.latest_min_eig;
        }

        let factor = self.factor.as_ref().expect("factor maintained above");
        let mut v = self.eig_vec.clone().expect("seeded above");
        let mut lambda = f64::INFINITY;
        let mut certified = false;
        for _ in 0..64 {
            let mut w = factor.solve(&v);
            let nw = w.norm();
            if !nw.is_finite() || nw == 0.0 {
                break;
            }
            w /= nw;
            let kw = &self.kron_sum * &w;
            lambda = w.dot(&kw);
            let residual = (&kw - &w * lambda).norm();
            v = w;
            // A small residual certifies lambda is within it of a true
            // eigenvalue; warm starts keep the iterate on the bottom one.
            if residual <= 1e-9 * lambda.abs().max(1.0) {
                certified = true;
                break;
            }
        }
        if !certified {
            // Clustered bottom spectrum: inverse iteration cannot separate
            // the eigenvalues, so pay for a direct solve.
            self.eig_vec = Some(v);
            self.latest_min_eig = self.min_eig_direct().max(0.0);
            return self.latest_min_eig;
        }
        self.eig_vec = Some(v);

        self.tracked_since_validate += 1;
        if self.tracked_since_validate >= TRACKED_VALIDATE_EVERY {
            self.tracked_since_validate = 0;
            let direct = self.min_eig_direct();
            if (lambda - direct).abs() > TRACKED_MATCH_TOL * direct.abs().max(1.0) {
                self.seed_eigvec();
                return self.latest_min_eig;
            }
        }
        self.latest_min_eig = lambda.max(0.0);
        self.latest_min_eig
    }

    /// Confirms a gate crossing with a direct eigensolve and latches the
    /// switch; once latched the gate never reverts.
    fn try_latch(&mut self) -> bool {
        if self.switched {
            return true;
        }
        if self.latest_min_eig >= self.c_tol {
            let direct = self.min_eig_direct();
            self.latest_min_eig = direct.max(0.0);
            if direct >= self.c_tol {
                self.switched = true;
            }
        }
        self.switched
    }
}

/// Smallest eigenvalue of the accumulated information matrix (direct solve).
pub fn min_eig_fim(acc: &FimAccumulator) -> f64 {
    if acc.kron_sum().iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    acc.min_eig_direct()
}

/// Information-driven exploration variance with naive fallback.
///
/// Returns `(σ²_η, using_fim)`: once the latest minimum eigenvalue reaches
/// `c_tol` the schedule switches permanently to `σ² = α / λ_min`; before
/// that it follows the naive schedule.
pub fn if2e_sigma(
    acc: &mut FimAccumulator,
    fallback: &NaiveSchedule,
    l_k: u64,
) -> (f64, bool) {
    if acc.try_latch() {
        let lm = acc.latest_min_eig().max(acc.c_tol());
        (acc.alpha() / lm, true)
    } else {
        (naive_sigma(fallback, l_k), false)
    }
}
