//! Exact reference values.
//!
//! For networks whose propensities are affine in the state the mean obeys a
//! closed linear ODE, and so does its parameter derivative; integrating both
//! gives S_θ(f,T) for linear f to ODE tolerance. For small networks of any
//! kind, [`brute_force_psi`] computes E[f(X(t)) | X(0) = x] on a truncated
//! state space.

mod affine;
mod ctmc;

pub use affine::{
    affine_form, auto_cap, exact_sensitivity_affine, mean_trajectory, AffineForm,
    AffineMomentSystem,
};
pub use ctmc::{brute_force_d_theta, brute_force_psi, TruncatedCtmc, DEFAULT_LEAK_TOL, MAX_STATES};

use thiserror::Error;

use crate::model::{EvalError, ModelError};

/// Relative tolerance of the moment ODE integration.
pub const ODE_RTOL: f64 = 1e-9;
/// Absolute tolerance of the moment ODE integration.
pub const ODE_ATOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("propensity of reaction `{0}` is not affine in the species counts")]
    NonAffine(String),
    #[error("output function is not linear in the species counts")]
    NonlinearOutput,
    #[error("truncated state space would have {0} states (limit {MAX_STATES})")]
    TooManyStates(u128),
    #[error("probability {leak:e} leaked past the truncation (tolerance {tol:e}); raise the cap")]
    TruncationTooSmall { leak: f64, tol: f64 },
    #[error("state lies outside the truncation or has negative counts")]
    StateOutsideCap,
    #[error("ODE integration failed: {0}")]
    Integration(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}
