//! Likelihood-ratio (Girsanov) estimator.

use super::{EstimatorError, SampleValue};
use crate::model::{Expr, OutputFunction, ReactionNetwork, SensitivityKinetics, State};
use crate::sim::{count_step, fire, JumpEvent, RngStream, Stepper};

/// Reject θ = 0 when some propensity is a mass-action law with rate θ: the
/// channel is then switched off and the likelihood ratio is undefined.
pub(crate) fn check_usable(
    net: &ReactionNetwork,
    param: &str,
    value: f64,
) -> Result<(), EstimatorError> {
    if value != 0.0 {
        return Ok(());
    }
    for r in net.reactions() {
        if let Expr::MassAction { rate, .. } = &r.propensity {
            if matches!(&**rate, Expr::Param(p) if p == param) {
                return Err(EstimatorError::Unusable(format!(
                    "`{param}` is the rate constant of reaction `{}` and equals 0",
                    r.name
                )));
            }
        }
    }
    Ok(())
}

/// One realization of f(X(T)) · Σ_k (Σ_firings ∂λ_k/λ_k − ∫_0^T ∂λ_k dt).
pub fn girsanov_sample(
    sens: &SensitivityKinetics,
    x0: &State,
    t_end: f64,
    f: &OutputFunction,
    rng: &mut RngStream,
) -> Result<SampleValue, EstimatorError> {
    let kin = sens.kinetics();
    let mut stepper = Stepper::new(kin);
    let mut derivs = Vec::new();
    let mut x = x0.clone();
    let mut t = 0.0;
    let mut weight = 0.0;
    let mut jumps = 0;
    while t < t_end {
        let event = stepper.step(&x, rng)?;
        sens.derivatives(&x, &mut derivs)?;
        for &(k, _) in &derivs {
            if stepper.rates()[k] == 0.0 {
                return Err(EstimatorError::Unusable(format!(
                    "reaction {k} has zero propensity but non-zero derivative at a visited state"
                )));
            }
        }
        let remaining = t_end - t;
        let dt = event.dt().map_or(remaining, |dt| dt.min(remaining));
        weight -= derivs.iter().map(|(_, d)| d).sum::<f64>() * dt;
        t += dt;
        match event {
            JumpEvent::Jump { reaction, .. } if t < t_end => {
                if let Some(&(_, d)) = derivs.iter().find(|(k, _)| *k == reaction) {
                    weight += d / stepper.rates()[reaction];
                }
                count_step(&mut jumps)?;
                fire(kin, &mut x, reaction)?;
            }
            _ => break,
        }
    }
    Ok(SampleValue {
        value: f.eval(&x)? * weight,
        jumps,
        aux_paths_used: 0,
    })
}
