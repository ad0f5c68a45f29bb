//! Networks with parameter values substituted, ready for simulation.

use super::expr::{falling_factorial_product, EvalError, Expr, Params};
use super::{ModelError, ReactionNetwork, State};

/// A rate law with parameters folded into constants.
#[derive(Debug, Clone)]
enum Rate {
    Zero,
    MassAction { rate: f64, reactants: Vec<(usize, u32)> },
    General(Expr),
}

impl Rate {
    fn compile(expr: &Expr, params: &Params) -> Result<Rate, EvalError> {
        let bound = expr.bind(&|name| params.get(name).copied())?;
        Ok(match bound {
            Expr::Const(0.0) => Rate::Zero,
            Expr::Const(c) => Rate::MassAction {
                rate: c,
                reactants: Vec::new(),
            },
            Expr::MassAction { rate, consumption } => match *rate {
                Expr::Const(0.0) => Rate::MassAction {
                    rate: 0.0,
                    reactants: consumption,
                },
                Expr::Const(c) => Rate::MassAction {
                    rate: c,
                    reactants: consumption,
                },
                other => Rate::General(Expr::MassAction {
                    rate: Box::new(other),
                    consumption,
                }),
            },
            other => Rate::General(other),
        })
    }

    #[inline]
    fn eval(&self, x: &[u64]) -> Result<f64, EvalError> {
        match self {
            Rate::Zero => Ok(0.0),
            Rate::MassAction { rate, reactants } => {
                if reactants.is_empty() {
                    return Ok(*rate);
                }
                Ok(rate * falling_factorial_product(x, reactants)?)
            }
            Rate::General(e) => e.eval_with(x, &|_| None),
        }
    }
}

/// A reaction network bound to one set of parameter values.
#[derive(Debug, Clone)]
pub struct Kinetics {
    d: usize,
    stoich: Vec<Vec<i64>>,
    rates: Vec<Rate>,
}

impl Kinetics {
    /// Bind the network's own parameter values.
    pub fn new(net: &ReactionNetwork) -> Result<Kinetics, EvalError> {
        Kinetics::with_params(net, &net.params)
    }

    pub fn with_params(net: &ReactionNetwork, params: &Params) -> Result<Kinetics, EvalError> {
        let rates = net
            .reactions
            .iter()
            .map(|r| Rate::compile(&r.propensity, params))
            .collect::<Result<_, _>>()?;
        Ok(Kinetics {
            d: net.num_species(),
            stoich: net.reactions.iter().map(|r| r.stoich.clone()).collect(),
            rates,
        })
    }

    pub fn num_species(&self) -> usize {
        self.d
    }

    pub fn num_reactions(&self) -> usize {
        self.rates.len()
    }

    pub fn stoich(&self, k: usize) -> &[i64] {
        &self.stoich[k]
    }

    /// λ_k(x).
    #[inline]
    pub fn propensity(&self, k: usize, x: &[u64]) -> Result<f64, EvalError> {
        let v = self.rates[k].eval(x)?;
        if v < 0.0 {
            return Err(EvalError::NegativePropensity(v));
        }
        Ok(v)
    }

    /// Fill `out` with every λ_k(x) and return λ_0(x) = Σ_k λ_k(x).
    #[inline]
    pub fn propensities(&self, x: &[u64], out: &mut [f64]) -> Result<f64, EvalError> {
        let mut total = 0.0;
        for (k, slot) in out.iter_mut().enumerate().take(self.rates.len()) {
            let v = self.propensity(k, x)?;
            *slot = v;
            total += v;
        }
        Ok(total)
    }

    /// Fire reaction `k` in place; false if a count would go negative.
    #[inline]
    pub fn fire(&self, x: &mut State, k: usize) -> bool {
        x.apply(&self.stoich[k])
    }
}

/// Kinetics plus the exact derivatives ∂λ_k/∂θ for one sensitive parameter.
#[derive(Debug, Clone)]
pub struct SensitivityKinetics {
    kinetics: Kinetics,
    param: String,
    value: f64,
    // Only reactions whose propensity depends on the parameter.
    derivatives: Vec<(usize, Rate)>,
}

impl SensitivityKinetics {
    pub fn new(net: &ReactionNetwork, param: &str) -> Result<SensitivityKinetics, ModelError> {
        let value = net.param(param).ok_or_else(|| ModelError::UnknownIdentifier {
            name: param.to_string(),
            context: "sensitive parameter".into(),
        })?;
        let kinetics = Kinetics::new(net).map_err(|e| bind_error(param, e))?;
        let mut derivatives = Vec::new();
        for (k, r) in net.reactions.iter().enumerate() {
            let d = r.propensity.diff(param);
            if d.is_zero() {
                continue;
            }
            let rate = Rate::compile(&d, &net.params).map_err(|e| bind_error(param, e))?;
            if !matches!(rate, Rate::Zero) {
                derivatives.push((k, rate));
            }
        }
        Ok(SensitivityKinetics {
            kinetics,
            param: param.to_string(),
            value,
            derivatives,
        })
    }

    pub fn kinetics(&self) -> &Kinetics {
        &self.kinetics
    }

    pub fn param(&self) -> &str {
        &self.param
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    /// True when no propensity depends on the parameter at all.
    pub fn is_insensitive(&self) -> bool {
        self.derivatives.is_empty()
    }

    /// Indices of reactions whose propensity depends on the parameter.
    pub fn sensitive_reactions(&self) -> impl Iterator<Item = usize> + '_ {
        self.derivatives.iter().map(|(k, _)| *k)
    }

    /// Push (k, ∂λ_k/∂θ(x)) for every k with a non-zero derivative at x.
    #[inline]
    pub fn derivatives(&self, x: &[u64], out: &mut Vec<(usize, f64)>) -> Result<(), EvalError> {
        out.clear();
        for (k, rate) in &self.derivatives {
            let v = rate.eval(x)?;
            if v != 0.0 {
                out.push((*k, v));
            }
        }
        Ok(())
    }
}

fn bind_error(param: &str, e: EvalError) -> ModelError {
    ModelError::UnknownIdentifier {
        name: match e {
            EvalError::UnknownParam(p) => p,
            other => format!("{other}"),
        },
        context: format!("binding parameters for `{param}`"),
    }
}
