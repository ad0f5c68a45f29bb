//! Transient distributions on a truncated state space by uniformization.

use super::OracleError;
use crate::model::{Kinetics, OutputFunction, ReactionNetwork, State};

/// Largest truncated state space accepted.
pub const MAX_STATES: u128 = 100_000;
/// Default bound on probability lost past the truncation.
pub const DEFAULT_LEAK_TOL: f64 = 1e-8;

// Uniformization slices keep Λτ at most this, so exp(-Λτ) never underflows.
const SLICE_RATE: f64 = 10.0;
const POISSON_TAIL: f64 = 1e-15;

/// The chain restricted to 0 ≤ x_i ≤ cap_i; jumps leaving the box go to an
/// absorbing sink whose mass is reported as leakage.
#[derive(Debug, Clone)]
pub struct TruncatedCtmc {
    cap: Vec<u64>,
    strides: Vec<usize>,
    n_states: usize,
    // CSR rows of in-box transitions i -> targets[offsets[i]..offsets[i+1]].
    offsets: Vec<usize>,
    targets: Vec<u32>,
    rates: Vec<f64>,
    exit: Vec<f64>,
    max_exit: f64,
}

impl TruncatedCtmc {
    pub fn new(net: &ReactionNetwork, cap: &[u64]) -> Result<TruncatedCtmc, OracleError> {
        let d = net.num_species();
        assert_eq!(cap.len(), d, "one cap per species");
        let total: u128 = cap.iter().map(|&c| c as u128 + 1).product();
        if total > MAX_STATES {
            return Err(OracleError::TooManyStates(total));
        }
        let n_states = total as usize;
        let mut strides = vec![1usize; d];
        for i in 1..d {
            strides[i] = strides[i - 1] * (cap[i - 1] as usize + 1);
        }
        let kin = Kinetics::new(net)?;
        let mut ctmc = TruncatedCtmc {
            cap: cap.to_vec(),
            strides,
            n_states,
            offsets: Vec::with_capacity(n_states + 1),
            targets: Vec::new(),
            rates: Vec::new(),
            exit: Vec::with_capacity(n_states),
            max_exit: 0.0,
        };
        ctmc.offsets.push(0);
        let mut x = State::zeros(d);
        for idx in 0..n_states {
            ctmc.decode_into(idx, &mut x);
            let mut exit = 0.0;
            for k in 0..kin.num_reactions() {
                let rate = kin.propensity(k, &x)?;
                if rate <= 0.0 {
                    continue;
                }
                exit += rate;
                if let Some(j) = x.shifted(kin.stoich(k)).and_then(|y| ctmc.index(&y)) {
                    if j != idx {
                        ctmc.targets.push(j as u32);
                        ctmc.rates.push(rate);
                    } else {
                        exit -= rate;
                    }
                }
            }
            ctmc.exit.push(exit);
            ctmc.max_exit = ctmc.max_exit.max(exit);
            ctmc.offsets.push(ctmc.targets.len());
        }
        Ok(ctmc)
    }

    pub fn num_states(&self) -> usize {
        self.n_states
    }

    pub fn cap(&self) -> &[u64] {
        &self.cap
    }

    /// Index of `x`, or `None` outside the box.
    pub fn index(&self, x: &[u64]) -> Option<usize> {
        let mut idx = 0;
        for ((&xi, &c), &s) in x.iter().zip(&self.cap).zip(&self.strides) {
            if xi > c {
                return None;
            }
            idx += xi as usize * s;
        }
        Some(idx)
    }

    fn decode_into(&self, mut idx: usize, x: &mut State) {
        for (i, &c) in self.cap.iter().enumerate() {
            let base = c as usize + 1;
            x[i] = (idx % base) as u64;
            idx /= base;
        }
    }

    // v ← v P with P = I + Q/Λ; mass leaving the box is dropped.
    fn apply_jump_matrix(&self, v: &[f64], out: &mut [f64], lambda: f64) {
        for (o, (&vi, &e)) in out.iter_mut().zip(v.iter().zip(&self.exit)) {
            *o = vi * (1.0 - e / lambda);
        }
        for i in 0..self.n_states {
            let vi = v[i];
            if vi == 0.0 {
                continue;
            }
            for p in self.offsets[i]..self.offsets[i + 1] {
                out[self.targets[p] as usize] += vi * self.rates[p] / lambda;
            }
        }
    }

    /// Distribution at time `t` started from `x`, and the mass lost.
    pub fn transient(&self, x: &[u64], t: f64) -> Result<(Vec<f64>, f64), OracleError> {
        let start = self.index(x).ok_or(OracleError::StateOutsideCap)?;
        let mut p = vec![0.0; self.n_states];
        p[start] = 1.0;
        // An absorbing start never moves; skip the series so Ψ is exact.
        if t > 0.0 && self.exit[start] > 0.0 {
            let lambda = self.max_exit;
            let slices = (lambda * t / SLICE_RATE).ceil().max(1.0) as usize;
            let q = lambda * t / slices as f64;
            let mut v = vec![0.0; self.n_states];
            let mut next = vec![0.0; self.n_states];
            let mut acc = vec![0.0; self.n_states];
            for _ in 0..slices {
                let mut w = (-q).exp();
                let mut covered = w;
                v.copy_from_slice(&p);
                for (a, &vi) in acc.iter_mut().zip(&v) {
                    *a = w * vi;
                }
                let mut n = 0u32;
                while covered < 1.0 - POISSON_TAIL && n < 10_000 {
                    self.apply_jump_matrix(&v, &mut next, lambda);
                    std::mem::swap(&mut v, &mut next);
                    n += 1;
                    w *= q / n as f64;
                    covered += w;
                    for (a, &vi) in acc.iter_mut().zip(&v) {
                        *a += w * vi;
                    }
                }
                std::mem::swap(&mut p, &mut acc);
            }
        }
        let leak = (1.0 - p.iter().sum::<f64>()).max(0.0);
        Ok((p, leak))
    }

    /// Ψ(x, f, t) = E[f(X(t)) | X(0) = x], failing if more than `leak_tol`
    /// probability left the box.
    pub fn psi(
        &self,
        x: &[u64],
        f: &OutputFunction,
        t: f64,
        leak_tol: f64,
    ) -> Result<f64, OracleError> {
        let (p, leak) = self.transient(x, t)?;
        if leak > leak_tol {
            return Err(OracleError::TruncationTooSmall { leak, tol: leak_tol });
        }
        let mut y = State::zeros(self.cap.len());
        let mut total = 0.0;
        for (idx, &pi) in p.iter().enumerate() {
            if pi != 0.0 {
                self.decode_into(idx, &mut y);
                total += pi * f.eval(&y)?;
            }
        }
        Ok(total)
    }
}

/// Ψ_θ(x, f, t) on the box 0 ≤ x_i ≤ cap_i.
pub fn brute_force_psi(
    net: &ReactionNetwork,
    x: &[u64],
    f: &OutputFunction,
    t: f64,
    cap: &[u64],
) -> Result<f64, OracleError> {
    TruncatedCtmc::new(net, cap)?.psi(x, f, t, DEFAULT_LEAK_TOL)
}

/// D_θ(x, f, t, k) = Ψ_θ(x + ζ_k, f, t) − Ψ_θ(x, f, t).
pub fn brute_force_d_theta(
    net: &ReactionNetwork,
    x: &[u64],
    f: &OutputFunction,
    t: f64,
    k: usize,
    cap: &[u64],
) -> Result<f64, OracleError> {
    let zeta = &net.reactions()[k].stoich;
    if zeta.iter().all(|&z| z == 0) {
        return Ok(0.0);
    }
    let moved = State(x.to_vec()).shifted(zeta).ok_or(OracleError::StateOutsideCap)?;
    let ctmc = TruncatedCtmc::new(net, cap)?;
    Ok(ctmc.psi(&moved, f, t, DEFAULT_LEAK_TOL)? - ctmc.psi(x, f, t, DEFAULT_LEAK_TOL)?)
}
