//! Parameter sensitivity estimation for stochastic reaction networks.
//!
//! A network is a continuous-time Markov chain on species counts. For an
//! output f, horizon T and parameter θ the crate estimates
//! S_θ(f,T) = ∂/∂θ E[f(X_θ(T))] by Monte Carlo, with four estimators:
//! the Poisson path algorithm (unbiased), the Girsanov likelihood ratio
//! (unbiased) and two coupled finite-difference schemes (biased by h).
//! The [`oracle`] module provides exact values for checking them.

pub mod model;
pub mod sim;
pub mod estimators;
pub mod stats;
pub mod oracle;
