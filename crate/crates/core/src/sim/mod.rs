//! Path simulation: Gillespie stepping, Poisson variates, path integrals and
//! the coupled-pair kernels used by the estimators.

mod coupling;
mod poisson;
mod rng;

pub use coupling::{
    crp_pair, evaluate_coupled_difference, split_clock_pair, CoupledOutcome, SharedPoissonClocks,
};
pub use poisson::{generate_poisson, INVERSION_LIMIT};
pub use rng::RngStream;

use thiserror::Error;

use crate::model::{EvalError, Kinetics, OutputFunction, State};

/// Maximum number of jumps simulated on one path before giving up.
pub const STEP_CAP: u64 = 100_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("path exceeded {0} jumps; the dynamics may be explosive")]
    StepCap(u64),
    #[error("reaction {reaction} drove a species count negative")]
    NegativeCount { reaction: usize },
}

/// Outcome of one Gillespie step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JumpEvent {
    /// Reaction `reaction` fires after waiting `dt`.
    Jump { dt: f64, reaction: usize },
    /// All propensities are zero: the chain never leaves this state.
    Absorbed,
}

impl JumpEvent {
    /// Waiting time, or `None` for the infinite wait of an absorbing state.
    pub fn dt(&self) -> Option<f64> {
        match *self {
            JumpEvent::Jump { dt, .. } => Some(dt),
            JumpEvent::Absorbed => None,
        }
    }

    pub fn reaction(&self) -> Option<usize> {
        match *self {
            JumpEvent::Jump { reaction, .. } => Some(reaction),
            JumpEvent::Absorbed => None,
        }
    }
}

/// Reusable SSA workspace; after [`Stepper::step`] the propensities of the
/// state just stepped from stay readable.
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    kin: &'a Kinetics,
    rates: Vec<f64>,
    total: f64,
}

impl<'a> Stepper<'a> {
    pub fn new(kin: &'a Kinetics) -> Stepper<'a> {
        Stepper {
            kin,
            rates: vec![0.0; kin.num_reactions()],
            total: 0.0,
        }
    }

    pub fn kinetics(&self) -> &'a Kinetics {
        self.kin
    }

    /// λ_k at the last stepped state.
    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    /// λ_0 at the last stepped state.
    pub fn total(&self) -> f64 {
        self.total
    }

    #[inline]
    pub fn step(&mut self, x: &[u64], rng: &mut RngStream) -> Result<JumpEvent, SimError> {
        self.total = self.kin.propensities(x, &mut self.rates)?;
        if self.total <= 0.0 {
            return Ok(JumpEvent::Absorbed);
        }
        let dt = rng.exp1() / self.total;
        let target = rng.uniform() * self.total;
        let mut acc = 0.0;
        let mut chosen = None;
        for (k, &r) in self.rates.iter().enumerate() {
            if r > 0.0 {
                acc += r;
                chosen = Some(k);
                if acc >= target {
                    break;
                }
            }
        }
        // Falling off the end can only happen through rounding; the last
        // active channel is the right answer then.
        let reaction = chosen.expect("positive total has an active channel");
        Ok(JumpEvent::Jump { dt, reaction })
    }
}

/// One Gillespie step from `x`.
pub fn ssa_step(kin: &Kinetics, x: &[u64], rng: &mut RngStream) -> Result<JumpEvent, SimError> {
    Stepper::new(kin).step(x, rng)
}

#[inline]
pub(crate) fn fire(kin: &Kinetics, x: &mut State, k: usize) -> Result<(), SimError> {
    if kin.fire(x, k) {
        Ok(())
    } else {
        Err(SimError::NegativeCount { reaction: k })
    }
}

#[inline]
pub(crate) fn count_step(steps: &mut u64) -> Result<(), SimError> {
    *steps += 1;
    if *steps > STEP_CAP {
        return Err(SimError::StepCap(STEP_CAP));
    }
    Ok(())
}

/// X(T) for a path started at `x0`.
pub fn simulate_terminal(
    kin: &Kinetics,
    x0: &State,
    t_end: f64,
    rng: &mut RngStream,
) -> Result<State, SimError> {
    let mut x = x0.clone();
    let mut stepper = Stepper::new(kin);
    let mut t = 0.0;
    let mut steps = 0;
    while t < t_end {
        match stepper.step(&x, rng)? {
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
    Ok(x)
}

/// ∫_0^tf f(Z(s)) ds along one fresh path Z started at `x`.
pub fn evaluate_integral(
    kin: &Kinetics,
    x: &State,
    tf: f64,
    f: &OutputFunction,
    rng: &mut RngStream,
) -> Result<f64, SimError> {
    let mut x = x.clone();
    let mut stepper = Stepper::new(kin);
    let mut t = 0.0;
    let mut integral = 0.0;
    let mut steps = 0;
    while t < tf {
        let event = stepper.step(&x, rng)?;
        let dt = event.dt().map_or(tf - t, |dt| dt.min(tf - t));
        integral += f.eval(&x)? * dt;
        t += dt;
        match event {
            JumpEvent::Jump { reaction, .. } if t < tf => {
                count_step(&mut steps)?;
                fire(kin, &mut x, reaction)?;
            }
            _ => break,
        }
    }
    Ok(integral)
}
