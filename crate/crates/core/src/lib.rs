//! Adaptive Linear-Quadratic-Gaussian control of unknown partially
//! observable linear systems, with naive (decaying-covariance) and
//! Fisher-information-driven exploration, plus the closed-loop subspace
//! identification and regret bookkeeping needed to benchmark them.

pub mod adaptive;
pub mod control_math;
pub mod exploration;
pub mod error;
pub mod experiment;
pub mod filtering;
pub mod oracle;
pub mod plant;
pub mod sysid;

pub use error::{Error, Result};
