//! Forward finite differences over coupled pairs of paths.

use super::{EstimatorError, SampleValue};
use crate::model::{Kinetics, OutputFunction, State};
use crate::sim::{crp_pair, split_clock_pair, CoupledOutcome, RngStream};

fn difference_quotient(
    out: CoupledOutcome,
    h: f64,
    f: &OutputFunction,
) -> Result<SampleValue, EstimatorError> {
    Ok(SampleValue {
        value: (f.eval(&out.x1)? - f.eval(&out.x2)?) / h,
        jumps: out.steps,
        aux_paths_used: 0,
    })
}

/// (f(X_{θ+h}(T)) − f(X_θ(T)))/h with both paths driven by the same unit
/// Poisson process per channel.
pub fn crp_sample(
    kin: &Kinetics,
    kin_shifted: &Kinetics,
    h: f64,
    x0: &State,
    t_end: f64,
    f: &OutputFunction,
    rng: &mut RngStream,
) -> Result<SampleValue, EstimatorError> {
    difference_quotient(crp_pair(kin_shifted, kin, x0, t_end, rng)?, h, f)
}

/// (f(X_{θ+h}(T)) − f(X_θ(T)))/h under the split-clock coupling.
pub fn cfd_sample(
    kin: &Kinetics,
    kin_shifted: &Kinetics,
    h: f64,
    x0: &State,
    t_end: f64,
    f: &OutputFunction,
    rng: &mut RngStream,
) -> Result<SampleValue, EstimatorError> {
    let out = split_clock_pair(kin_shifted, kin, x0, x0, t_end, false, rng)?;
    difference_quotient(out, h, f)
}
