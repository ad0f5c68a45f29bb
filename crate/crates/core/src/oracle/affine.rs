use ode_solvers::{DVector, Dopri5, OutputType, System};

use super::{OracleError, ODE_ATOL, ODE_RTOL};
use crate::model::{EvalError, Expr, ModelError, OutputFunction, Params, ReactionNetwork};

/// `coeffs · x + constant`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineForm {
    pub coeffs: Vec<f64>,
    pub constant: f64,
}

impl AffineForm {
    fn constant(d: usize, c: f64) -> AffineForm {
        AffineForm {
            coeffs: vec![0.0; d],
            constant: c,
        }
    }

    fn scale(mut self, s: f64) -> AffineForm {
        self.coeffs.iter_mut().for_each(|c| *c *= s);
        self.constant *= s;
        self
    }

    fn combine(mut self, other: AffineForm, sign: f64) -> AffineForm {
        for (a, b) in self.coeffs.iter_mut().zip(other.coeffs) {
            *a += sign * b;
        }
        self.constant += sign * other.constant;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.coeffs.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// Write `expr` as an affine function of the state, with parameters bound.
///
/// The decision is structural: a product is accepted only if at most one
/// factor mentions a species, a quotient only if its denominator does not,
/// a power only if its exponent does not and is 0 or 1. Returns `None` for
/// anything else.
pub fn affine_form(expr: &Expr, d: usize, params: &Params) -> Result<Option<AffineForm>, OracleError> {
    let zeros = vec![0; d];
    let constant_of = |e: &Expr| -> Result<f64, OracleError> { Ok(e.eval(&zeros, params)?) };
    if !expr.depends_on_state() {
        return Ok(Some(AffineForm::constant(d, constant_of(expr)?)));
    }
    let rec = |e: &Expr| affine_form(e, d, params);
    Ok(match expr {
        Expr::Species(i) => {
            let mut f = AffineForm::constant(d, 0.0);
            f.coeffs[*i] = 1.0;
            Some(f)
        }
        Expr::Neg(a) => rec(a)?.map(|f| f.scale(-1.0)),
        Expr::Add(a, b) => match (rec(a)?, rec(b)?) {
            (Some(f), Some(g)) => Some(f.combine(g, 1.0)),
            _ => None,
        },
        Expr::Sub(a, b) => match (rec(a)?, rec(b)?) {
            (Some(f), Some(g)) => Some(f.combine(g, -1.0)),
            _ => None,
        },
        Expr::Mul(a, b) => match (a.depends_on_state(), b.depends_on_state()) {
            (true, true) => None,
            (true, false) => {
                let c = constant_of(b)?;
                rec(a)?.map(|f| f.scale(c))
            }
            (false, _) => {
                let c = constant_of(a)?;
                rec(b)?.map(|f| f.scale(c))
            }
        },
        Expr::Div(a, b) if !b.depends_on_state() => {
            let den = constant_of(b)?;
            if den == 0.0 {
                return Err(OracleError::Eval(EvalError::DivisionByZero));
            }
            rec(a)?.map(|f| f.scale(1.0 / den))
        }
        Expr::Pow(a, b) if !b.depends_on_state() => match constant_of(b)? {
            1.0 => rec(a)?,
            0.0 => Some(AffineForm::constant(d, 1.0)),
            _ => None,
        },
        Expr::MassAction { rate, consumption } => {
            let order: u32 = consumption.iter().map(|&(_, n)| n).sum();
            let r = constant_of(rate)?;
            match (order, consumption.iter().find(|&&(_, n)| n > 0)) {
                (0, _) => Some(AffineForm::constant(d, r)),
                (1, Some(&(i, _))) if !rate.depends_on_state() => {
                    let mut f = AffineForm::constant(d, 0.0);
                    f.coeffs[i] = r;
                    Some(f)
                }
                _ => None,
            }
        }
        _ => None,
    })
}

/// d m/dt = A m + b for the mean of an affine network, with ∂A/∂θ, ∂b/∂θ.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMomentSystem {
    pub d: usize,
    /// Row-major d × d.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub da: Vec<f64>,
    pub db: Vec<f64>,
    /// Per-reaction propensity forms, kept for the covariance equation.
    propensities: Vec<AffineForm>,
    stoich: Vec<Vec<i64>>,
}

impl AffineMomentSystem {
    /// Extract the system; `param` may be `None` when only the mean is needed.
    pub fn new(net: &ReactionNetwork, param: Option<&str>) -> Result<AffineMomentSystem, OracleError> {
        let d = net.num_species();
        let mut sys = AffineMomentSystem {
            d,
            a: vec![0.0; d * d],
            b: vec![0.0; d],
            da: vec![0.0; d * d],
            db: vec![0.0; d],
            propensities: Vec::new(),
            stoich: Vec::new(),
        };
        for r in net.reactions() {
            let form = affine_form(&r.propensity, d, net.params())?
                .ok_or_else(|| OracleError::NonAffine(r.name.clone()))?;
            let dform = match param {
                Some(p) => affine_form(&r.propensity.diff(p), d, net.params())?
                    .ok_or_else(|| OracleError::NonAffine(r.name.clone()))?,
                None => AffineForm::constant(d, 0.0),
            };
            for (i, &z) in r.stoich.iter().enumerate() {
                if z == 0 {
                    continue;
                }
                let z = z as f64;
                for j in 0..d {
                    sys.a[i * d + j] += z * form.coeffs[j];
                    sys.da[i * d + j] += z * dform.coeffs[j];
                }
                sys.b[i] += z * form.constant;
                sys.db[i] += z * dform.constant;
            }
            sys.propensities.push(form);
            sys.stoich.push(r.stoich.clone());
        }
        Ok(sys)
    }

    fn mat_vec(&self, m: &[f64], v: &[f64], out: &mut [f64]) {
        for i in 0..self.d {
            out[i] = (0..self.d).map(|j| m[i * self.d + j] * v[j]).sum();
        }
    }
}

/// Output function as weights w with f(x) = w · x + const.
fn linear_weights(f: &OutputFunction, d: usize) -> Result<Vec<f64>, OracleError> {
    affine_form(f.expr(), d, &Params::new())?
        .map(|form| form.coeffs)
        .ok_or(OracleError::NonlinearOutput)
}

struct MeanSensitivity<'a>(&'a AffineMomentSystem);

impl System<f64, DVector<f64>> for MeanSensitivity<'_> {
    fn system(&self, _t: f64, y: &DVector<f64>, dy: &mut DVector<f64>) {
        let s = self.0;
        let d = s.d;
        let (m, sens) = y.as_slice().split_at(d);
        let out = dy.as_mut_slice();
        let mut tmp = vec![0.0; d];
        s.mat_vec(&s.a, m, &mut tmp);
        for i in 0..d {
            out[i] = tmp[i] + s.b[i];
        }
        s.mat_vec(&s.a, sens, &mut tmp);
        let mut tmp2 = vec![0.0; d];
        s.mat_vec(&s.da, m, &mut tmp2);
        for i in 0..d {
            out[d + i] = tmp[i] + tmp2[i] + s.db[i];
        }
    }
}

fn integrate<S: System<f64, DVector<f64>>>(
    sys: S,
    y0: DVector<f64>,
    t_end: f64,
) -> Result<Vec<DVector<f64>>, OracleError> {
    if t_end == 0.0 {
        return Ok(vec![y0]);
    }
    let mut solver = Dopri5::new(sys, 0.0, t_end, t_end, y0, ODE_RTOL, ODE_ATOL);
    solver.set_output(OutputType::Sparse);
    solver
        .integrate()
        .map_err(|e| OracleError::Integration(e.to_string()))?;
    Ok(solver.y_out().clone())
}

/// S_θ(f, T) for an affine network and linear f, from the network's initial
/// state.
pub fn exact_sensitivity_affine(
    net: &ReactionNetwork,
    param: &str,
    f: &OutputFunction,
    t_end: f64,
) -> Result<f64, OracleError> {
    if net.param(param).is_none() {
        return Err(OracleError::Model(ModelError::UnknownIdentifier {
            name: param.to_string(),
            context: "sensitive parameter".into(),
        }));
    }
    let sys = AffineMomentSystem::new(net, Some(param))?;
    let w = linear_weights(f, sys.d)?;
    let d = sys.d;
    let mut y0 = DVector::zeros(2 * d);
    for (i, &x) in net.initial_state().iter().enumerate() {
        y0[i] = x as f64;
    }
    let path = integrate(MeanSensitivity(&sys), y0, t_end)?;
    let y = path.last().expect("at least the initial point");
    Ok((0..d).map(|i| w[i] * y[d + i]).sum())
}

struct MeanCovariance<'a>(&'a AffineMomentSystem);

impl System<f64, DVector<f64>> for MeanCovariance<'_> {
    fn system(&self, _t: f64, y: &DVector<f64>, dy: &mut DVector<f64>) {
        let s = self.0;
        let d = s.d;
        let (m, cov) = y.as_slice().split_at(d);
        let out = dy.as_mut_slice();
        let mut tmp = vec![0.0; d];
        s.mat_vec(&s.a, m, &mut tmp);
        for i in 0..d {
            out[i] = tmp[i] + s.b[i];
        }
        let mf: Vec<f64> = m.to_vec();
        for i in 0..d {
            for j in 0..d {
                let mut v = 0.0;
                for l in 0..d {
                    v += s.a[i * d + l] * cov[l * d + j] + cov[i * d + l] * s.a[j * d + l];
                }
                for (form, z) in s.propensities.iter().zip(&s.stoich) {
                    if z[i] != 0 && z[j] != 0 {
                        v += (z[i] * z[j]) as f64 * form.eval(&mf).max(0.0);
                    }
                }
                out[d + i * d + j] = v;
            }
        }
    }
}

/// Mean and per-species variance at each accepted ODE step from `x`.
pub fn mean_trajectory(
    net: &ReactionNetwork,
    x: &[u64],
    t_end: f64,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>, OracleError> {
    let sys = AffineMomentSystem::new(net, None)?;
    let d = sys.d;
    let mut y0 = DVector::zeros(d + d * d);
    for (i, &xi) in x.iter().enumerate() {
        y0[i] = xi as f64;
    }
    let path = integrate(MeanCovariance(&sys), y0, t_end)?;
    Ok(path
        .iter()
        .map(|y| {
            let mean = (0..d).map(|i| y[i]).collect();
            let var = (0..d).map(|i| y[d + i * d + i].max(0.0)).collect();
            (mean, var)
        })
        .collect())
}

/// Per-species truncation: the largest mean + 12 standard deviations over
/// [0, t], at least 50 and at least the starting count.
pub fn auto_cap(net: &ReactionNetwork, x: &[u64], t_end: f64) -> Result<Vec<u64>, OracleError> {
    let path = mean_trajectory(net, x, t_end)?;
    let d = net.num_species();
    let mut cap: Vec<u64> = x.iter().map(|&xi| xi.max(50)).collect();
    for (mean, var) in &path {
        for i in 0..d {
            let bound = (mean[i] + 12.0 * var[i].sqrt()).ceil();
            cap[i] = cap[i].max(bound as u64);
        }
    }
    Ok(cap)
}
