//! Closed-loop identification: regressor assembly, regularized
//! least-squares Markov-parameter estimation, Hankel construction, and the
//! Ho-Kalman-style realization that recovers `(Â, B̂, Ĉ, L̂)` up to
//! similarity, plus excitation and error diagnostics.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::control_math::{ensure_finite, spectral_norm, spectral_radius, RANK_EPS_REL};
use crate::error::{Error, Result};
use crate::plant::SystemParams;

/// Stacked regressor `φ_t = [y_{t-1}; …; y_{t-H}; u_{t-1}; …; u_{t-H}]`,
/// outputs newest-first then inputs newest-first. Defined only for `t >= H`.
pub fn build_regressor(
    history: &[(DVector<f64>, DVector<f64>)],
    t: u64,
    h: usize,
) -> Result<DVector<f64>> {
    if (t as usize) < h || history.len() < t as usize {
        return Err(Error::InsufficientHistory { t, h });
    }
    let t = t as usize;
    let (n_y, n_u) = (history[0].0.len(), history[0].1.len());
    let mut phi = DVector::zeros((n_y + n_u) * h);
    for i in 0..h {
        let (y, u) = &history[t - 1 - i];
        phi.rows_mut(i * n_y, n_y).copy_from(y);
        phi.rows_mut(h * n_y + i * n_u, n_u).copy_from(u);
    }
    Ok(phi)
}

/// The estimated Markov-parameter block together with the regularized Gram
/// matrix it was solved against.
#[derive(Debug, Clone)]
pub struct MarkovEstimate {
    /// `M̂ ∈ R^{n_y × (n_y+n_u)H}`, columns ordered as H blocks of `CĀⁱF`
    /// followed by H blocks of `CĀⁱB`.
    pub m_hat: DMatrix<f64>,
    /// `V = ΦᵀΦ + λI`.
    pub v: DMatrix<f64>,
    pub lambda: f64,
    pub n_samples: usize,
}

/// Incremental accumulation of `ΦᵀΦ` and `ΦᵀY`; estimates are solved from
/// the moments at episode boundaries.
#[derive(Debug, Clone)]
pub struct MomentAccumulator {
    gram: DMatrix<f64>,
    cross: DMatrix<f64>,
    n: usize,
}

impl MomentAccumulator {
    pub fn new(phi_dim: usize, n_y: usize) -> Self {
        Self {
            gram: DMatrix::zeros(phi_dim, phi_dim),
            cross: DMatrix::zeros(phi_dim, n_y),
            n: 0,
        }
    }

    pub fn push(&mut self, phi: &DVector<f64>, y: &DVector<f64>) -> Result<()> {
        if phi.len() != self.gram.nrows() || y.len() != self.cross.ncols() {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "moment push: phi has {} entries (expect {}), y has {} (expect {})",
                    phi.len(),
                    self.gram.nrows(),
                    y.len(),
                    self.cross.ncols()
                ),
            });
        }
        self.gram.syger(1.0, phi, phi, 1.0);
        self.cross.ger(1.0, phi, y, 1.0);
        self.n += 1;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Raw Gram matrix `ΦᵀΦ` (no regularization).
    pub fn raw_gram(&self) -> DMatrix<f64> {
        // syger only fills the lower triangle; mirror it.
        let mut g = self.gram.clone();
        for i in 0..g.nrows() {
            for j in (i + 1)..g.ncols() {
                g[(i, j)] = g[(j, i)];
            }
        }
        g
    }

    /// Solves the ridge system `(ΦᵀΦ + λI) M̂ᵀ = ΦᵀY`.
    pub fn estimate(&self, lambda: f64) -> Result<MarkovEstimate> {
        if self.n == 0 {
            return Err(Error::EmptyData);
        }
        if lambda <= 0.0 {
            return Err(Error::Invalid {
                context: format!("ridge regularization must be positive, got {lambda}"),
            });
        }
        let dim = self.gram.nrows();
        let v = self.raw_gram() + DMatrix::identity(dim, dim) * lambda;
        let chol = Cholesky::new(v.clone()).ok_or(Error::SingularInnerBlock)?;
        let m_hat_t = chol.solve(&self.cross);
        Ok(MarkovEstimate {
            m_hat: m_hat_t.transpose(),
            v,
            lambda,
            n_samples: self.n,
        })
    }
}

/// Batch regularized least squares over explicit regressor/output pairs,
/// `M̂ᵀ = (ΦᵀΦ + λI)⁻¹ ΦᵀY`.
pub fn rls_markov(
    regressors: &[DVector<f64>],
    outputs: &[DVector<f64>],
    lambda: f64,
) -> Result<MarkovEstimate> {
    if regressors.is_empty() || outputs.is_empty() {
        return Err(Error::EmptyData);
    }
    if regressors.len() != outputs.len() {
        return Err(Error::DimensionMismatch {
            context: format!(
                "rls: {} regressors vs {} outputs",
                regressors.len(),
                outputs.len()
            ),
        });
    }
    let mut acc = MomentAccumulator::new(regressors[0].len(), outputs[0].len());
    for (phi, y) in regressors.iter().zip(outputs) {
        acc.push(phi, y)?;
    }
    acc.estimate(lambda)
}

/// Default Hankel split `d1 = ceil((H-1)/2)`, `d2 = H - 1 - d1`.
pub fn default_hankel_split(h: usize) -> (usize, usize) {
    let d1 = (h.saturating_sub(1)).div_ceil(2);
    (d1, h.saturating_sub(1) - d1)
}

/// Exact Markov-parameter block
/// `[CF, CĀF, …, CĀ^{H-1}F, CB, CĀB, …, CĀ^{H-1}B]` with `Ā = A - FC`.
pub fn markov_from_params(
    params: &SystemParams,
    f: &DMatrix<f64>,
    h: usize,
) -> Result<DMatrix<f64>> {
    let (n_x, n_u, n_y) = (params.n_x(), params.n_u(), params.n_y());
    if f.nrows() != n_x || f.ncols() != n_y {
        return Err(Error::DimensionMismatch {
            context: format!(
                "markov_from_params: F is {}x{}, expected {n_x}x{n_y}",
                f.nrows(),
                f.ncols()
            ),
        });
    }
    ensure_finite(f, "markov_from_params F")?;
    let abar = params.a() - f * params.c();
    let mut m = DMatrix::zeros(n_y, (n_y + n_u) * h);
    let mut power = DMatrix::identity(n_x, n_x);
    for i in 0..h {
        let cai = params.c() * &power;
        m.view_mut((0, i * n_y), (n_y, n_y)).copy_from(&(&cai * f));
        m.view_mut((0, h * n_y + i * n_u), (n_y, n_u))
            .copy_from(&(&cai * params.b()));
        power = &power * &abar;
    }
    Ok(m)
}

/// A model realized from Markov parameters, in its own state coordinates.
#[derive(Debug, Clone)]
pub struct RealizedModel {
    pub a_hat: DMatrix<f64>,
    pub b_hat: DMatrix<f64>,
    pub c_hat: DMatrix<f64>,
    pub l_hat: DMatrix<f64>,
    /// Innovations-form gain extracted from the controllability factor.
    pub f_hat: DMatrix<f64>,
    /// Singular-value spectrum of the Hankel matrix, for diagnostics.
    pub hankel_sv: Vec<f64>,
}

impl RealizedModel {
    pub fn params(&self) -> Result<SystemParams> {
        SystemParams::new(self.a_hat.clone(), self.b_hat.clone(), self.c_hat.clone())
    }
}

fn pinv(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    crate::control_math::pseudo_inverse(m, RANK_EPS_REL)
}

/// Ho-Kalman realization of order `n_x` from an estimated Markov block.
///
/// Builds the two block-Hankel matrices from the F- and B-blocks, truncates
/// the shifted-free Hankel to rank `n_x`, and reads the model out of the
/// observability/controllability factors. Requires
/// `d1 >= n_x`, `d2 >= n_x`, `d1 + d2 + 1 = H`.
pub fn ho_kalman(
    me: &MarkovEstimate,
    n_x: usize,
    h: usize,
    d1: usize,
    d2: usize,
) -> Result<RealizedModel> {
    if d1 < n_x || d2 < n_x || d1 + d2 + 1 != h {
        return Err(Error::BadSplit { d1, d2, h, n_x });
    }
    let n_y = me.m_hat.nrows();
    if me.m_hat.ncols() % h != 0 {
        return Err(Error::DimensionMismatch {
            context: format!("Markov block has {} cols, not divisible by H = {h}", me.m_hat.ncols()),
        });
    }
    let n_yu = me.m_hat.ncols() / h;
    if n_yu <= n_y {
        return Err(Error::DimensionMismatch {
            context: format!("Markov block implies n_y + n_u = {n_yu} <= n_y = {n_y}"),
        });
    }
    let n_u = n_yu - n_y;

    let f_block = |i: usize| me.m_hat.view((0, i * n_y), (n_y, n_y));
    let b_block = |i: usize| me.m_hat.view((0, h * n_y + i * n_u), (n_y, n_u));

    // Full Hankel [H_F, H_G]: d1 block rows, d2+1 block columns per part,
    // entry (r, c) holding the (r+c)-th Markov block.
    let fw = (d2 + 1) * n_y;
    let gw = (d2 + 1) * n_u;
    let mut hankel = DMatrix::zeros(d1 * n_y, fw + gw);
    for r in 0..d1 {
        for c in 0..=d2 {
            hankel
                .view_mut((r * n_y, c * n_y), (n_y, n_y))
                .copy_from(&f_block(r + c));
            hankel
                .view_mut((r * n_y, fw + c * n_u), (n_y, n_u))
                .copy_from(&b_block(r + c));
        }
    }

    // H⁻ drops the last block column of each part; H⁺ drops the first.
    let minus_cols = d2 * (n_y + n_u);
    let mut h_minus = DMatrix::zeros(d1 * n_y, minus_cols);
    let mut h_plus = DMatrix::zeros(d1 * n_y, minus_cols);
    h_minus
        .view_mut((0, 0), (d1 * n_y, d2 * n_y))
        .copy_from(&hankel.view((0, 0), (d1 * n_y, d2 * n_y)));
    h_minus
        .view_mut((0, d2 * n_y), (d1 * n_y, d2 * n_u))
        .copy_from(&hankel.view((0, fw), (d1 * n_y, d2 * n_u)));
    h_plus
        .view_mut((0, 0), (d1 * n_y, d2 * n_y))
        .copy_from(&hankel.view((0, n_y), (d1 * n_y, d2 * n_y)));
    h_plus
        .view_mut((0, d2 * n_y), (d1 * n_y, d2 * n_u))
        .copy_from(&hankel.view((0, fw + n_u), (d1 * n_y, d2 * n_u)));

    let svd = crate::control_math::thin_svd(&h_minus)?;
    let hankel_sv = svd.singular_values.clone();
    let smax = hankel_sv[0];
    if smax <= 0.0 || hankel_sv[n_x - 1] < 1e-10 * smax {
        return Err(Error::RankDeficient {
            sv_ratio: if smax > 0.0 { hankel_sv[n_x - 1] / smax } else { 0.0 },
        });
    }

    // Rank-n_x factors: observability O = U Z^{1/2}, controllability
    // [C_F, C_B] = Z^{1/2} Vᵀ.
    let mut obs = DMatrix::zeros(d1 * n_y, n_x);
    let mut ctrl = DMatrix::zeros(n_x, minus_cols);
    for j in 0..n_x {
        let s_sqrt = hankel_sv[j].sqrt();
        obs.column_mut(j).copy_from(&(svd.u.column(j) * s_sqrt));
        ctrl.row_mut(j).copy_from(&(svd.v_t.row(j) * s_sqrt));
    }

    let c_hat = obs.rows(0, n_y).into_owned();
    let b_hat = ctrl.columns(d2 * n_y, n_u).into_owned();
    let f_hat = ctrl.columns(0, n_y).into_owned();

    let obs_pinv = pinv(&obs)?;
    let ctrl_pinv = pinv(&ctrl)?;
    let abar_hat = &obs_pinv * &h_plus * &ctrl_pinv;
    let a_hat = &abar_hat + &f_hat * &c_hat;

    // L̂ is the first n_y-column block of Â† O† H⁻ (= Â† [C_F, C_B]).
    let a_pinv = pinv(&a_hat)?;
    let l_hat = (&a_pinv * &obs_pinv * &h_minus)
        .columns(0, n_y)
        .into_owned();

    Ok(RealizedModel {
        a_hat,
        b_hat,
        c_hat,
        l_hat,
        f_hat,
        hankel_sv,
    })
}

/// Smallest singular value of the raw Gram `V - λI`; the persistence of
/// excitation diagnostic.
pub fn min_sv_gram(me: &MarkovEstimate) -> f64 {
    let dim = me.v.nrows();
    let raw = &me.v - DMatrix::identity(dim, dim) * me.lambda;
    match crate::control_math::singular_values(&raw) {
        Ok(sv) => sv[sv.len() - 1].max(0.0),
        Err(_) => f64::NAN,
    }
}

/// Spectral norm of `M̂ - M`; the model-mismatch proxy.
pub fn markov_error(me: &MarkovEstimate, truth: &DMatrix<f64>) -> Result<f64> {
    if me.m_hat.shape() != truth.shape() {
        return Err(Error::DimensionMismatch {
            context: format!(
                "markov_error: estimate is {:?}, truth is {:?}",
                me.m_hat.shape(),
                truth.shape()
            ),
        });
    }
    Ok(spectral_norm(&(&me.m_hat - truth)))
}

/// Emits a warning to stderr when the truncation bias of the realized model
/// is not negligible at the configured horizon.
pub fn truncation_bias_warning(model: &RealizedModel, h: usize) {
    let abar = &model.a_hat - &model.f_hat * &model.c_hat;
    let mut power = DMatrix::identity(abar.nrows(), abar.nrows());
    for _ in 0..h {
        power = &power * &abar;
    }
    let norm = power.norm();
    if !(norm <= 1e-6) {
        eprintln!(
            "warning: ||Ā^H|| = {norm:.3e} at H = {h}; the regression truncation bias may \
             not be negligible (rho(Ā) = {:.4})",
            spectral_radius(&abar).unwrap_or(f64::NAN)
        );
    }
}
