use std::fmt;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the solvers, the simulator, and the adaptive loops.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An iterative solver exhausted its iteration budget.
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },
    /// The inner block BᵀPB + R of the Riccati recursion is numerically
    /// singular; usually signals an invalid R.
    SingularInnerBlock,
    /// Noise standard deviations must be strictly positive.
    InvalidNoise { sigma_w: f64, sigma_z: f64 },
    /// dlyap requires a Schur-stable argument.
    UnstableArgument { rho: f64 },
    /// Operands have incompatible shapes.
    DimensionMismatch { context: String },
    /// A covariance failed the Cholesky factorization even after jitter.
    NotPsd { context: String },
    /// A matrix fed to a solver contains NaN or infinite entries.
    NonFinite { context: String },
    /// The system violates the standing assumptions (stability,
    /// controllability, observability); lists the failed checks.
    AssumptionViolated { failures: Vec<String> },
    /// The simulated state norm exceeded the divergence guard.
    Diverged { norm: f64, t: u64 },
    /// The closed loop of a computed control gain is unstable; for gains of
    /// the true system this signals a numerical failure.
    GainUnstable { rho: f64 },
    /// A regressor was requested before H steps of history exist.
    InsufficientHistory { t: u64, h: usize },
    /// Least squares was asked to fit zero samples.
    EmptyData,
    /// The Hankel matrix has no usable rank-n_x part.
    RankDeficient { sv_ratio: f64 },
    /// The Hankel split violates d1 >= n_x, d2 >= n_x, d1 + d2 + 1 = H.
    BadSplit {
        d1: usize,
        d2: usize,
        h: usize,
        n_x: usize,
    },
    /// The innovation covariance estimate is not invertible even with jitter.
    SingularInnovation,
    /// An adaptive run failed inside an episode.
    EpisodeFailed {
        episode: usize,
        source: Box<Error>,
    },
    /// Input validation failure outside the numeric paths.
    Invalid { context: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NonConvergence {
                what,
                iterations,
                residual,
            } => write!(
                f,
                "{what} did not converge after {iterations} iterations (residual {residual:.3e})"
            ),
            Error::SingularInnerBlock => {
                write!(f, "inner block BᵀPB + R is numerically singular")
            }
            Error::InvalidNoise { sigma_w, sigma_z } => write!(
                f,
                "noise standard deviations must be positive (sigma_w = {sigma_w}, sigma_z = {sigma_z})"
            ),
            Error::UnstableArgument { rho } => {
                write!(f, "dlyap argument has spectral radius {rho} >= 1")
            }
            Error::DimensionMismatch { context } => write!(f, "dimension mismatch: {context}"),
            Error::NotPsd { context } => write!(
                f,
                "matrix is not positive semi-definite (jitter exhausted): {context}"
            ),
            Error::NonFinite { context } => write!(f, "non-finite entries: {context}"),
            Error::AssumptionViolated { failures } => {
                write!(f, "system assumptions violated: {}", failures.join("; "))
            }
            Error::Diverged { norm, t } => {
                write!(f, "state diverged at step {t} (norm {norm:.3e})")
            }
            Error::GainUnstable { rho } => {
                write!(f, "closed loop of computed gain is unstable (rho = {rho})")
            }
            Error::InsufficientHistory { t, h } => {
                write!(f, "regressor needs t >= H (t = {t}, H = {h})")
            }
            Error::EmptyData => write!(f, "least squares requires at least one sample"),
            Error::RankDeficient { sv_ratio } => write!(
                f,
                "Hankel matrix is rank deficient (sigma_nx / sigma_max = {sv_ratio:.3e})"
            ),
            Error::BadSplit { d1, d2, h, n_x } => write!(
                f,
                "invalid Hankel split: need d1 >= n_x, d2 >= n_x, d1 + d2 + 1 = H \
                 (d1 = {d1}, d2 = {d2}, H = {h}, n_x = {n_x})"
            ),
            Error::SingularInnovation => {
                write!(f, "innovation covariance is singular even with jitter")
            }
            Error::EpisodeFailed { episode, source } => {
                write!(f, "episode {episode} failed: {source}")
            }
            Error::Invalid { context } => write!(f, "invalid input: {context}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::EpisodeFailed { source, .. } => Some(source.as_ref()),
            _ => None,
        }
    }
}
