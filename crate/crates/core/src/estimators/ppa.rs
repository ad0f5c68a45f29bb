//! The Poisson path algorithm.
//!
//! Along one main path, every visited state x with λ_0(x) > 0 and every
//! channel k with ∂λ_k/∂θ ≠ 0 contributes a deterministic term plus, with
//! probability driven by a Poisson count, a coupled pair started at
//! (x + ζ_k, x). The count has mean c·|∂λ_k/∂θ|/λ_0, so c trades variance
//! against auxiliary work; it is fixed once per request from a pilot run.

use super::{EstimatorError, SampleValue};
use crate::model::{OutputFunction, SensitivityKinetics, State};
use crate::sim::{
    count_step, evaluate_coupled_difference, evaluate_integral, fire, generate_poisson,
    JumpEvent, RngStream, SimError, Stepper,
};

/// The normalization constant c and how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpaCalibration {
    pub m0: u64,
    pub n0: u64,
    pub r_tot_estimate: f64,
}

impl PpaCalibration {
    pub fn new(m0: u64, n0: u64, r_tot_estimate: f64) -> PpaCalibration {
        PpaCalibration {
            m0,
            n0,
            r_tot_estimate,
        }
    }

    /// c = M0 / E[R_tot], or `None` when the pilot saw no sensitivity at all,
    /// in which case no Poisson counts are drawn.
    pub fn c(&self) -> Option<f64> {
        (self.r_tot_estimate > 0.0).then(|| self.m0 as f64 / self.r_tot_estimate)
    }
}

/// Pilot estimate of E[R_tot]: the mean over `n0` paths of
/// Σ_states Σ_k |∂λ_k/∂θ| / λ_0 over the states visited before `t_end`.
/// The initial state always counts, so `t_end = 0` gives its term alone.
pub fn estimate_r_total(
    sens: &SensitivityKinetics,
    x0: &State,
    t_end: f64,
    n0: u64,
    rng: &mut RngStream,
) -> Result<f64, EstimatorError> {
    if n0 == 0 {
        return Err(EstimatorError::InvalidRequest("N0 must be positive".into()));
    }
    if sens.is_insensitive() {
        return Ok(0.0);
    }
    let kin = sens.kinetics();
    let mut stepper = Stepper::new(kin);
    let mut derivs = Vec::new();
    let mut total = 0.0;
    for _ in 0..n0 {
        let mut x = x0.clone();
        let mut t = 0.0;
        let mut steps = 0;
        loop {
            let event = stepper.step(&x, rng)?;
            let lambda0 = stepper.total();
            if lambda0 > 0.0 {
                sens.derivatives(&x, &mut derivs)?;
                total += derivs.iter().map(|(_, d)| d.abs()).sum::<f64>() / lambda0;
            }
            match event {
                JumpEvent::Absorbed => break,
                JumpEvent::Jump { dt, reaction } => {
                    t += dt;
                    if t >= t_end {
                        break;
                    }
                    count_step(&mut steps)?;
                    fire(kin, &mut x, reaction)?;
                }
            }
        }
    }
    Ok(total / n0 as f64)
}

/// One realization of the PPA estimator.
pub fn ppa_sample(
    sens: &SensitivityKinetics,
    x0: &State,
    t_end: f64,
    f: &OutputFunction,
    calibration: &PpaCalibration,
    rng: &mut RngStream,
) -> Result<SampleValue, EstimatorError> {
    let kin = sens.kinetics();
    let c = calibration.c();
    let mut stepper = Stepper::new(kin);
    let mut derivs = Vec::new();
    let mut x = x0.clone();
    let mut t = 0.0;
    let mut s = 0.0;
    let mut jumps = 0;
    let mut aux = 0;

    while t < t_end {
        let event = stepper.step(&x, rng)?;
        let lambda0 = stepper.total();
        let remaining = t_end - t;
        let dt = event.dt().map_or(remaining, |dt| dt.min(remaining));
        let gamma = if lambda0 > 0.0 {
            rng.exp1() / lambda0
        } else {
            f64::INFINITY
        };
        sens.derivatives(&x, &mut derivs)?;
        if !derivs.is_empty() {
            let fx = f.eval(&x)?;
            for &(k, d) in &derivs {
                let moved = x
                    .shifted(kin.stoich(k))
                    .ok_or(SimError::NegativeCount { reaction: k })?;
                if lambda0 == 0.0 {
                    let integral = evaluate_integral(kin, &moved, remaining, f, rng)?;
                    s += d * (integral - remaining * fx);
                    continue;
                }
                let n = match c {
                    Some(c) => generate_poisson(c * d.abs() / lambda0, rng),
                    None => 0,
                };
                let jump_gain = f.eval(&moved)? - fx;
                if gamma < remaining {
                    s += d * jump_gain * (dt - 1.0 / lambda0);
                    if n > 0 {
                        let c = c.expect("n > 0 implies c");
                        let diff =
                            evaluate_coupled_difference(kin, &moved, &x, remaining - gamma, f, rng)?;
                        s += d.signum() * n as f64 / c * diff;
                        aux += n;
                    }
                } else {
                    s += d * jump_gain * dt;
                }
            }
        }
        t += dt;
        match event {
            JumpEvent::Jump { reaction, .. } if t < t_end => {
                count_step(&mut jumps)?;
                fire(kin, &mut x, reaction)?;
            }
            _ => break,
        }
    }
    Ok(SampleValue {
        value: s,
        jumps,
        aux_paths_used: aux,
    })
}
