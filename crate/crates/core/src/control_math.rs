//! Linear-algebra routines for control: Riccati and Lyapunov solvers,
//! controllability/observability matrices, spectral quantities, and seeded
//! Gaussian sampling.
//!
//! Both Riccati solvers use a fixed-point iteration started from the constant
//! term, symmetrizing after every sweep, and report the fixed-point residual
//! of the returned iterate.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Default relative tolerance for the Riccati fixed-point iterations.
pub const DEFAULT_DARE_TOL: f64 = 1e-12;
/// Default iteration budget for the Riccati fixed-point iterations.
pub const DEFAULT_DARE_MAX_ITER: usize = 100_000;
/// Singular values below this fraction of the largest one count as zero.
pub const RANK_EPS_REL: f64 = 1e-8;

/// A converged Riccati solution together with its certification data.
#[derive(Debug, Clone)]
pub struct DareSolution {
    /// The symmetric PSD fixed point.
    pub value: DMatrix<f64>,
    /// Frobenius norm of `value - f(value)` where `f` is the Riccati map.
    pub residual_norm: f64,
    /// Number of fixed-point sweeps performed.
    pub iterations: usize,
}

pub(crate) fn ensure_finite(m: &DMatrix<f64>, context: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            context: context.to_string(),
        })
    }
}

pub(crate) fn ensure_finite_vec(v: &DVector<f64>, context: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            context: context.to_string(),
        })
    }
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

fn dims_square(m: &DMatrix<f64>, name: &str) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            context: format!("{name} must be square, got {}x{}", m.nrows(), m.ncols()),
        });
    }
    Ok(m.nrows())
}

/// Solves `P = Qc + AᵀPA − AᵀPB (BᵀPB + R)⁻¹ BᵀPA` for the control value
/// matrix P, starting the iteration from `P = Qc`.
pub fn solve_control_dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    qc: &DMatrix<f64>,
    r: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<DareSolution> {
    let n = dims_square(a, "A")?;
    dims_square(qc, "Qc")?;
    let m = dims_square(r, "R")?;
    if b.nrows() != n || b.ncols() != m || qc.nrows() != n {
        return Err(Error::DimensionMismatch {
            context: format!(
                "control DARE shapes: A {}x{}, B {}x{}, Qc {}x{}, R {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                qc.nrows(),
                qc.ncols(),
                r.nrows(),
                r.ncols()
            ),
        });
    }
    ensure_finite(a, "control DARE A")?;
    ensure_finite(b, "control DARE B")?;
    ensure_finite(qc, "control DARE Qc")?;
    ensure_finite(r, "control DARE R")?;

    let riccati_map = |p: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let pb = p * b;
        let inner = b.transpose() * &pb + r;
        let chol = Cholesky::new(inner).ok_or(Error::SingularInnerBlock)?;
        let btpa = pb.transpose() * a;
        let gain = chol.solve(&btpa); // (BᵀPB + R)⁻¹ BᵀPA
        let mut next = qc + a.transpose() * p * a - btpa.transpose() * gain;
        symmetrize(&mut next);
        Ok(next)
    };

    let mut p = qc.clone();
    symmetrize(&mut p);
    for it in 1..=max_iter {
        let next = riccati_map(&p)?;
        let delta = (&next - &p).norm();
        let scale = 1.0 + next.norm();
        p = next;
        if delta <= tol * scale {
            let residual_norm = (&p - riccati_map(&p)?).norm();
            return Ok(DareSolution {
                value: p,
                residual_norm,
                iterations: it,
            });
        }
    }
    let residual = (&p - riccati_map(&p)?).norm();
    Err(Error::NonConvergence {
        what: "control DARE",
        iterations: max_iter,
        residual,
    })
}

/// Solves `Σ = σ_w²I + AΣAᵀ − AΣCᵀ (CΣCᵀ + σ_z²I)⁻¹ CΣAᵀ` for the
/// steady-state prediction error covariance.
pub fn solve_filter_dare(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    sigma_w: f64,
    sigma_z: f64,
    tol: f64,
    max_iter: usize,
) -> Result<DareSolution> {
    if sigma_w <= 0.0 || sigma_z <= 0.0 {
        return Err(Error::InvalidNoise { sigma_w, sigma_z });
    }
    let n = dims_square(a, "A")?;
    if c.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: format!("filter DARE: C has {} cols, A is {n}x{n}", c.ncols()),
        });
    }
    ensure_finite(a, "filter DARE A")?;
    ensure_finite(c, "filter DARE C")?;

    let qw = DMatrix::identity(n, n) * (sigma_w * sigma_w);
    let rz = sigma_z * sigma_z;
    let ny = c.nrows();

    let riccati_map = |s: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let sc = s * c.transpose();
        let inner = c * &sc + DMatrix::identity(ny, ny) * rz;
        let chol = Cholesky::new(inner).ok_or(Error::SingularInnerBlock)?;
        let csa = sc.transpose() * a.transpose(); // CΣAᵀ
        let gain = chol.solve(&csa);
        let mut next = &qw + a * s * a.transpose() - csa.transpose() * gain;
        symmetrize(&mut next);
        Ok(next)
    };

    let mut s = qw.clone();
    for it in 1..=max_iter {
        let next = riccati_map(&s)?;
        let delta = (&next - &s).norm();
        let scale = 1.0 + next.norm();
        s = next;
        if delta <= tol * scale {
            let residual_norm = (&s - riccati_map(&s)?).norm();
            return Ok(DareSolution {
                value: s,
                residual_norm,
                iterations: it,
            });
        }
    }
    let residual = (&s - riccati_map(&s)?).norm();
    Err(Error::NonConvergence {
        what: "filter DARE",
        iterations: max_iter,
        residual,
    })
}

/// Solves the discrete Lyapunov equation `S = XᵀSX + Y` by doubling.
///
/// Requires `rho(X) < 1`; Y is expected symmetric PSD.
pub fn dlyap(x: &DMatrix<f64>, y: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let n = dims_square(x, "X")?;
    dims_square(y, "Y")?;
    if y.nrows() != n {
        return Err(Error::DimensionMismatch {
            context: format!("dlyap: X is {n}x{n} but Y is {}x{}", y.nrows(), y.ncols()),
        });
    }
    ensure_finite(x, "dlyap X")?;
    ensure_finite(y, "dlyap Y")?;
    let rho = spectral_radius(x)?;
    if rho >= 1.0 {
        return Err(Error::UnstableArgument { rho });
    }

    // S_{m+1} = S_m + X_mᵀ S_m X_m with X_{m+1} = X_m² accumulates the series
    // sum_k (Xᵀ)^k Y X^k in log many sweeps.
    let mut s = y.clone();
    let mut xk = x.clone();
    for _ in 0..128 {
        let incr = xk.transpose() * &s * &xk;
        let incr_norm = incr.norm();
        s += incr;
        symmetrize(&mut s);
        if incr_norm <= tol * (1.0 + s.norm()) {
            return Ok(s);
        }
        xk = &xk * &xk;
    }
    Err(Error::NonConvergence {
        what: "dlyap",
        iterations: 128,
        residual: f64::NAN,
    })
}

/// Horizontal concatenation `[B, AB, …, A^{n_x−1}B]`.
pub fn controllability_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = dims_square(a, "A")?;
    if b.nrows() != n {
        return Err(Error::DimensionMismatch {
            context: format!("controllability: A is {n}x{n}, B has {} rows", b.nrows()),
        });
    }
    let m = b.ncols();
    let mut out = DMatrix::zeros(n, n * m);
    let mut block = b.clone();
    for i in 0..n {
        out.view_mut((0, i * m), (n, m)).copy_from(&block);
        block = a * &block;
    }
    Ok(out)
}

/// Vertical stack `[C; CA; …; CA^{n_x−1}]`.
pub fn observability_matrix(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = dims_square(a, "A")?;
    if c.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: format!("observability: A is {n}x{n}, C has {} cols", c.ncols()),
        });
    }
    let p = c.nrows();
    let mut out = DMatrix::zeros(n * p, n);
    let mut block = c.clone();
    for i in 0..n {
        out.view_mut((i * p, 0), (p, n)).copy_from(&block);
        block = &block * a;
    }
    Ok(out)
}

/// Largest eigenvalue magnitude of a square matrix.
pub fn spectral_radius(x: &DMatrix<f64>) -> Result<f64> {
    dims_square(x, "spectral_radius argument")?;
    ensure_finite(x, "spectral_radius argument")?;
    if x.nrows() == 0 {
        return Ok(0.0);
    }
    Ok(x.complex_eigenvalues()
        .iter()
        .map(|e| e.norm())
        .fold(0.0, f64::max))
}

/// A thin SVD `M = U diag(s) Vᵀ` with singular values sorted descending.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub v_t: DMatrix<f64>,
}

/// Thin SVD that always factors the tall orientation and verifies the
/// recomposition. The upstream solver mis-pairs factors on some wide inputs,
/// so wide matrices are transposed, decomposed, and swapped back.
pub fn thin_svd(m: &DMatrix<f64>) -> Result<ThinSvd> {
    let wide = m.ncols() > m.nrows();
    let work = if wide { m.transpose() } else { m.clone() };
    let svd = nalgebra::SVD::new_unordered(work, true, true);
    let u_raw = svd.u.expect("svd requested with u");
    let v_t_raw = svd.v_t.expect("svd requested with v");
    let sv = svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[j].partial_cmp(&sv[i]).expect("singular value NaN"));

    let k = sv.len();
    let mut u = DMatrix::zeros(u_raw.nrows(), k);
    let mut v_t = DMatrix::zeros(k, v_t_raw.ncols());
    let mut singular_values = Vec::with_capacity(k);
    for (j, &idx) in order.iter().enumerate() {
        u.column_mut(j).copy_from(&u_raw.column(idx));
        v_t.row_mut(j).copy_from(&v_t_raw.row(idx));
        singular_values.push(sv[idx]);
    }
    let (u, v_t) = if wide {
        (v_t.transpose(), u.transpose())
    } else {
        (u, v_t)
    };

    // Recomposition check: the factor pairing must actually reproduce M.
    let mut recomp = DMatrix::zeros(m.nrows(), m.ncols());
    for j in 0..k {
        recomp += u.column(j) * v_t.row(j) * singular_values[j];
    }
    let err = (&recomp - m).norm();
    let scale = 1.0 + singular_values.first().copied().unwrap_or(0.0);
    if err > 1e-9 * scale {
        return Err(Error::NonConvergence {
            what: "singular value decomposition",
            iterations: 0,
            residual: err,
        });
    }
    Ok(ThinSvd {
        u,
        singular_values,
        v_t,
    })
}

/// Singular values, descending.
pub fn singular_values(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    Ok(thin_svd(m)?.singular_values)
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    thin_svd(m)
        .map(|s| s.singular_values[0])
        .unwrap_or(f64::NAN)
}

/// Number of singular values above `RANK_EPS_REL` times the largest one.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = match singular_values(m) {
        Ok(sv) => sv,
        Err(_) => return 0,
    };
    let cutoff = RANK_EPS_REL * sv[0];
    if sv[0] == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > cutoff).count()
}

/// Moore-Penrose pseudo-inverse with singular values below
/// `eps_rel * sigma_max` treated as zero.
pub fn pseudo_inverse(m: &DMatrix<f64>, eps_rel: f64) -> Result<DMatrix<f64>> {
    let svd = thin_svd(m)?;
    let smax = svd.singular_values.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return Ok(DMatrix::zeros(m.ncols(), m.nrows()));
    }
    let cutoff = eps_rel * smax;
    let mut out = DMatrix::zeros(m.ncols(), m.nrows());
    for (j, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff {
            out += svd.v_t.row(j).transpose() * svd.u.column(j).transpose() / s;
        }
    }
    Ok(out)
}

/// Draws a vector of i.i.d. standard normals.
pub fn standard_normal_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Cholesky factor of a symmetric PSD covariance, escalating a diagonal
/// jitter of `1e-10 * trace / n` by factors of ten up to three times.
fn psd_factor(covariance: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = covariance.nrows();
    if covariance.iter().all(|&v| v == 0.0) {
        return Ok(DMatrix::zeros(n, n));
    }
    if let Some(chol) = Cholesky::new(covariance.clone()) {
        return Ok(chol.unpack());
    }
    let base = 1e-10 * covariance.trace() / n as f64;
    let mut jitter = base;
    for _ in 0..3 {
        let jittered = covariance + DMatrix::identity(n, n) * jitter;
        if let Some(chol) = Cholesky::new(jittered) {
            return Ok(chol.unpack());
        }
        jitter *= 10.0;
    }
    Err(Error::NotPsd {
        context: format!("{n}x{n} covariance with trace {:.3e}", covariance.trace()),
    })
}

/// Draws from `N(mean, covariance)` using the jittered Cholesky factor.
///
/// Always consumes exactly `n` standard normals from the generator, so the
/// stream position is independent of the covariance.
pub fn sample_gaussian(
    mean: &DVector<f64>,
    covariance: &DMatrix<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<DVector<f64>> {
    let n = mean.len();
    if covariance.nrows() != n || covariance.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: format!(
                "sample_gaussian: mean has {n} entries, covariance is {}x{}",
                covariance.nrows(),
                covariance.ncols()
            ),
        });
    }
    ensure_finite(covariance, "sample_gaussian covariance")?;
    let factor = psd_factor(covariance)?;
    let z = standard_normal_vector(rng, n);
    Ok(mean + factor * z)
}
