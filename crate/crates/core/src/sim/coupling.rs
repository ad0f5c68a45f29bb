//! Coupled pairs of paths.
//!
//! Two couplings live here. The split-clock coupling runs three clocks per
//! channel: one at min(λ_k(x1), λ_k(x2)) that moves both paths, and one for
//! each residual. The shared-noise coupling drives both paths with the same
//! unit-rate Poisson process per channel. Both are simulated with
//! next-reaction internal times.

use super::{count_step, fire, RngStream, SimError};
use crate::model::{Kinetics, OutputFunction, State};

/// Final states of a coupled pair and the number of jumps simulated.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledOutcome {
    pub x1: State,
    pub x2: State,
    pub steps: u64,
}

/// Simulate (Z1, Z2) under the split-clock coupling up to time `tf`.
///
/// Z1 follows `kin1` from `x1`, Z2 follows `kin2` from `x2`. With
/// `stop_on_merge` the run ends as soon as the states agree, which is only
/// valid when both sides share kinetics (they then stay together forever).
/// Clock ties go to the smallest (channel, clock) pair.
pub fn split_clock_pair(
    kin1: &Kinetics,
    kin2: &Kinetics,
    x1: &State,
    x2: &State,
    tf: f64,
    stop_on_merge: bool,
    rng: &mut RngStream,
) -> Result<CoupledOutcome, SimError> {
    let k_count = kin1.num_reactions();
    debug_assert_eq!(k_count, kin2.num_reactions());
    let mut x1 = x1.clone();
    let mut x2 = x2.clone();
    // Clock (k, i) lives at index 3k + i.
    let mut internal = vec![0.0; 3 * k_count];
    let mut target: Vec<f64> = (0..3 * k_count).map(|_| rng.exp1()).collect();
    let mut rates = vec![0.0; 3 * k_count];
    let mut lam1 = vec![0.0; k_count];
    let mut lam2 = vec![0.0; k_count];
    let mut t = 0.0;
    let mut steps = 0;

    while t < tf && !(stop_on_merge && x1 == x2) {
        kin1.propensities(&x1, &mut lam1)?;
        kin2.propensities(&x2, &mut lam2)?;
        for k in 0..k_count {
            let shared = lam1[k].min(lam2[k]);
            rates[3 * k] = shared;
            rates[3 * k + 1] = lam1[k] - shared;
            rates[3 * k + 2] = lam2[k] - shared;
        }
        let mut dt = f64::INFINITY;
        let mut next = usize::MAX;
        for (j, &a) in rates.iter().enumerate() {
            if a > 0.0 {
                let d = (target[j] - internal[j]) / a;
                if d < dt {
                    dt = d;
                    next = j;
                }
            }
        }
        if next == usize::MAX {
            break;
        }
        t += dt;
        if t >= tf {
            break;
        }
        count_step(&mut steps)?;
        let (k, clock) = (next / 3, next % 3);
        if clock != 2 {
            fire(kin1, &mut x1, k)?;
        }
        if clock != 1 {
            fire(kin2, &mut x2, k)?;
        }
        for (tk, &a) in internal.iter_mut().zip(&rates) {
            *tk += a * dt;
        }
        internal[next] = target[next];
        target[next] += rng.exp1();
    }
    Ok(CoupledOutcome { x1, x2, steps })
}

/// f(Z1(tf)) − f(Z2(tf)) for a split-clock pair started at (x1, x2) under
/// one set of kinetics. Identical starting states return 0 without drawing.
pub fn evaluate_coupled_difference(
    kin: &Kinetics,
    x1: &State,
    x2: &State,
    tf: f64,
    f: &OutputFunction,
    rng: &mut RngStream,
) -> Result<f64, SimError> {
    if x1 == x2 {
        return Ok(0.0);
    }
    let out = split_clock_pair(kin, kin, x1, x2, tf, true, rng)?;
    Ok(f.eval(&out.x1)? - f.eval(&out.x2)?)
}

/// Arrival times of one unit-rate Poisson process per channel, generated on
/// demand and shared by every path that reads them.
#[derive(Debug, Clone)]
pub struct SharedPoissonClocks {
    points: Vec<Vec<f64>>,
}

impl SharedPoissonClocks {
    pub fn new(channels: usize) -> SharedPoissonClocks {
        SharedPoissonClocks {
            points: vec![Vec::new(); channels],
        }
    }

    /// The `j`-th arrival (0-based) of channel `k`.
    pub fn arrival(&mut self, k: usize, j: usize, rng: &mut RngStream) -> f64 {
        let seq = &mut self.points[k];
        while seq.len() <= j {
            let last = seq.last().copied().unwrap_or(0.0);
            seq.push(last + rng.exp1());
        }
        seq[j]
    }

    /// Run one path to time `t_end`, firing channel k at the arrivals of its
    /// process measured in integrated propensity.
    pub fn simulate(
        &mut self,
        kin: &Kinetics,
        x0: &State,
        t_end: f64,
        rng: &mut RngStream,
    ) -> Result<(State, u64), SimError> {
        let k_count = kin.num_reactions();
        let mut x = x0.clone();
        let mut internal = vec![0.0; k_count];
        let mut fired = vec![0usize; k_count];
        let mut next_arrival: Vec<f64> = (0..k_count).map(|k| self.arrival(k, 0, rng)).collect();
        let mut lam = vec![0.0; k_count];
        let mut t = 0.0;
        let mut steps = 0;
        while t < t_end {
            kin.propensities(&x, &mut lam)?;
            let mut dt = f64::INFINITY;
            let mut next = usize::MAX;
            for k in 0..k_count {
                if lam[k] > 0.0 {
                    let d = (next_arrival[k] - internal[k]) / lam[k];
                    if d < dt {
                        dt = d;
                        next = k;
                    }
                }
            }
            if next == usize::MAX {
                break;
            }
            t += dt;
            if t >= t_end {
                break;
            }
            count_step(&mut steps)?;
            fire(kin, &mut x, next)?;
            for (tk, &l) in internal.iter_mut().zip(&lam) {
                *tk += l * dt;
            }
            internal[next] = next_arrival[next];
            fired[next] += 1;
            next_arrival[next] = self.arrival(next, fired[next], rng);
        }
        Ok((x, steps))
    }
}

/// Terminal states of two paths from `x0` driven by the same Poisson
/// processes, the first under `kin_a` and the second under `kin_b`.
pub fn crp_pair(
    kin_a: &Kinetics,
    kin_b: &Kinetics,
    x0: &State,
    t_end: f64,
    rng: &mut RngStream,
) -> Result<CoupledOutcome, SimError> {
    let mut clocks = SharedPoissonClocks::new(kin_a.num_reactions());
    let (x1, s1) = clocks.simulate(kin_a, x0, t_end, rng)?;
    let (x2, s2) = clocks.simulate(kin_b, x0, t_end, rng)?;
    Ok(CoupledOutcome {
        x1,
        x2,
        steps: s1 + s2,
    })
}
