//! Propensity expressions: AST, evaluation and exact symbolic differentiation.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Parameter table, ordered by name so iteration is deterministic.
pub type Params = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("zero raised to a negative power")]
    ZeroToNegativePower,
    #[error("negative base {0} raised to a non-integer power")]
    NegativeBase(f64),
    #[error("non-finite value")]
    NonFinite,
    #[error("propensity evaluated to a negative value {0}")]
    NegativePropensity(f64),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("species index {0} out of range")]
    SpeciesOutOfRange(usize),
}

/// Expression tree over species counts and named parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Param(String),
    Species(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    /// `base^exp * ln(base)^m`, taken as 0 at `base = 0` (its limit for
    /// `exp > 0`). Produced by differentiating a power with respect to its
    /// exponent.
    PowLog(Box<Expr>, Box<Expr>, u32),
    /// `rate * prod_i C(x_i, nu_i) `, the stochastic mass-action law for a
    /// reaction consuming `nu_i` copies of species `i`.
    MassAction {
        rate: Box<Expr>,
        consumption: Vec<(usize, u32)>,
    },
}

#[allow(clippy::should_implement_trait)]
impl Expr {
    pub fn constant(v: f64) -> Expr {
        Expr::Const(v)
    }

    pub fn param(name: impl Into<String>) -> Expr {
        Expr::Param(name.into())
    }

    pub fn species(i: usize) -> Expr {
        Expr::Species(i)
    }

    pub fn mass_action(rate: Expr, consumption: Vec<(usize, u32)>) -> Expr {
        let consumption = consumption.into_iter().filter(|&(_, n)| n > 0).collect();
        Expr::MassAction {
            rate: Box::new(rate),
            consumption,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }

    fn is_one(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 1.0)
    }

    // Smart constructors used by `diff` to keep derivatives small.

    pub fn add(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (a, b) if a.is_zero() => b,
            (a, b) if b.is_zero() => a,
            (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
            (a, b) => Expr::Add(Box::new(a), Box::new(b)),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (a, b) if b.is_zero() => a,
            (a, b) if a.is_zero() => Expr::neg(b),
            (Expr::Const(x), Expr::Const(y)) => Expr::Const(x - y),
            (a, b) => Expr::Sub(Box::new(a), Box::new(b)),
        }
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (a, _) if a.is_zero() => Expr::Const(0.0),
            (_, b) if b.is_zero() => Expr::Const(0.0),
            (a, b) if a.is_one() => b,
            (a, b) if b.is_one() => a,
            (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
            (a, b) => Expr::Mul(Box::new(a), Box::new(b)),
        }
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (a, _) if a.is_zero() => Expr::Const(0.0),
            (a, b) if b.is_one() => a,
            (a, b) => Expr::Div(Box::new(a), Box::new(b)),
        }
    }

    pub fn pow(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (a, b) if b.is_one() => a,
            (_, b) if b.is_zero() => Expr::Const(1.0),
            (a, b) => Expr::Pow(Box::new(a), Box::new(b)),
        }
    }

    pub fn neg(a: Expr) -> Expr {
        match a {
            Expr::Const(c) => Expr::Const(-c),
            Expr::Neg(inner) => *inner,
            a => Expr::Neg(Box::new(a)),
        }
    }

    /// Does the expression mention parameter `name`?
    pub fn depends_on(&self, name: &str) -> bool {
        match self {
            Expr::Const(_) | Expr::Species(_) => false,
            Expr::Param(p) => p == name,
            Expr::Neg(a) => a.depends_on(name),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b)
            | Expr::PowLog(a, b, _) => a.depends_on(name) || b.depends_on(name),
            Expr::MassAction { rate, .. } => rate.depends_on(name),
        }
    }

    /// Does the expression read any species count?
    pub fn depends_on_state(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::Param(_) => false,
            Expr::Species(_) => true,
            Expr::Neg(a) => a.depends_on_state(),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b)
            | Expr::PowLog(a, b, _) => a.depends_on_state() || b.depends_on_state(),
            Expr::MassAction { rate, consumption } => {
                !consumption.is_empty() || rate.depends_on_state()
            }
        }
    }

    /// Visit every parameter name referenced by the expression.
    pub fn for_each_param<'a>(&'a self, visit: &mut impl FnMut(&'a str)) {
        match self {
            Expr::Const(_) | Expr::Species(_) => {}
            Expr::Param(p) => visit(p),
            Expr::Neg(a) => a.for_each_param(visit),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b)
            | Expr::PowLog(a, b, _) => {
                a.for_each_param(visit);
                b.for_each_param(visit);
            }
            Expr::MassAction { rate, .. } => rate.for_each_param(visit),
        }
    }

    /// Visit every species index referenced by the expression.
    pub fn for_each_species(&self, visit: &mut impl FnMut(usize)) {
        match self {
            Expr::Const(_) | Expr::Param(_) => {}
            Expr::Species(i) => visit(*i),
            Expr::Neg(a) => a.for_each_species(visit),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b)
            | Expr::PowLog(a, b, _) => {
                a.for_each_species(visit);
                b.for_each_species(visit);
            }
            Expr::MassAction { rate, consumption } => {
                rate.for_each_species(visit);
                for &(i, _) in consumption {
                    visit(i);
                }
            }
        }
    }

    /// Evaluate on a state with a parameter table.
    pub fn eval(&self, x: &[u64], params: &Params) -> Result<f64, EvalError> {
        self.eval_with(x, &|name| params.get(name).copied())
    }

    pub(crate) fn eval_with(
        &self,
        x: &[u64],
        lookup: &dyn Fn(&str) -> Option<f64>,
    ) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Const(c) => *c,
            Expr::Param(p) => lookup(p).ok_or_else(|| EvalError::UnknownParam(p.clone()))?,
            Expr::Species(i) => *x.get(*i).ok_or(EvalError::SpeciesOutOfRange(*i))? as f64,
            Expr::Neg(a) => -a.eval_with(x, lookup)?,
            Expr::Add(a, b) => a.eval_with(x, lookup)? + b.eval_with(x, lookup)?,
            Expr::Sub(a, b) => a.eval_with(x, lookup)? - b.eval_with(x, lookup)?,
            Expr::Mul(a, b) => a.eval_with(x, lookup)? * b.eval_with(x, lookup)?,
            Expr::Div(a, b) => checked_div(a.eval_with(x, lookup)?, b.eval_with(x, lookup)?)?,
            Expr::Pow(a, b) => checked_pow(a.eval_with(x, lookup)?, b.eval_with(x, lookup)?)?,
            Expr::PowLog(a, b, m) => {
                checked_pow_log(a.eval_with(x, lookup)?, b.eval_with(x, lookup)?, *m)?
            }
            Expr::MassAction { rate, consumption } => {
                let ff = falling_factorial_product(x, consumption)?;
                if ff == 0.0 {
                    0.0
                } else {
                    rate.eval_with(x, lookup)? * ff
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    /// Exact partial derivative with respect to parameter `param`.
    pub fn diff(&self, param: &str) -> Expr {
        if !self.depends_on(param) {
            return Expr::Const(0.0);
        }
        match self {
            Expr::Const(_) | Expr::Species(_) => Expr::Const(0.0),
            Expr::Param(p) => Expr::Const(if p == param { 1.0 } else { 0.0 }),
            Expr::Neg(a) => Expr::neg(a.diff(param)),
            Expr::Add(a, b) => Expr::add(a.diff(param), b.diff(param)),
            Expr::Sub(a, b) => Expr::sub(a.diff(param), b.diff(param)),
            Expr::Mul(a, b) => Expr::add(
                Expr::mul(a.diff(param), (**b).clone()),
                Expr::mul((**a).clone(), b.diff(param)),
            ),
            Expr::Div(a, b) => {
                // (a'b - ab') / b^2
                let num = Expr::sub(
                    Expr::mul(a.diff(param), (**b).clone()),
                    Expr::mul((**a).clone(), b.diff(param)),
                );
                Expr::div(num, Expr::pow((**b).clone(), Expr::Const(2.0)))
            }
            Expr::Pow(a, b) => pow_log_diff(a, b, 0, param),
            Expr::PowLog(a, b, m) => pow_log_diff(a, b, *m, param),
            Expr::MassAction { rate, consumption } => {
                let dr = rate.diff(param);
                if dr.is_zero() {
                    Expr::Const(0.0)
                } else {
                    Expr::MassAction {
                        rate: Box::new(dr),
                        consumption: consumption.clone(),
                    }
                }
            }
        }
    }

    /// Substitute parameter values and fold constants.
    pub fn bind(&self, lookup: &dyn Fn(&str) -> Option<f64>) -> Result<Expr, EvalError> {
        Ok(match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Species(i) => Expr::Species(*i),
            Expr::Param(p) => {
                Expr::Const(lookup(p).ok_or_else(|| EvalError::UnknownParam(p.clone()))?)
            }
            Expr::Neg(a) => Expr::neg(a.bind(lookup)?),
            Expr::Add(a, b) => fold(Expr::Add, a.bind(lookup)?, b.bind(lookup)?)?,
            Expr::Sub(a, b) => fold(Expr::Sub, a.bind(lookup)?, b.bind(lookup)?)?,
            Expr::Mul(a, b) => fold(Expr::Mul, a.bind(lookup)?, b.bind(lookup)?)?,
            Expr::Div(a, b) => fold(Expr::Div, a.bind(lookup)?, b.bind(lookup)?)?,
            Expr::Pow(a, b) => fold(Expr::Pow, a.bind(lookup)?, b.bind(lookup)?)?,
            Expr::PowLog(a, b, m) => {
                let (a, b) = (a.bind(lookup)?, b.bind(lookup)?);
                let node = Expr::PowLog(Box::new(a), Box::new(b), *m);
                match &node {
                    Expr::PowLog(a, b, _) if matches!((&**a, &**b), (Expr::Const(_), Expr::Const(_))) => {
                        Expr::Const(node.eval_with(&[], &|_| None)?)
                    }
                    _ => node,
                }
            }
            Expr::MassAction { rate, consumption } => Expr::MassAction {
                rate: Box::new(rate.bind(lookup)?),
                consumption: consumption.clone(),
            },
        })
    }

    /// Wrap with species names for printing in model syntax.
    pub fn display<'a>(&'a self, species: &'a [String]) -> DisplayExpr<'a> {
        DisplayExpr {
            expr: self,
            species,
        }
    }
}

/// d[a^b ln(a)^m] = a^b ln(a)^(m+1) b' + (b a^(b-1) ln(a)^m + m a^(b-1) ln(a)^(m-1)) a'
fn pow_log_diff(a: &Expr, b: &Expr, m: u32, param: &str) -> Expr {
    let term = |base: &Expr, exp: Expr, logs: u32| match logs {
        0 => Expr::pow(base.clone(), exp),
        _ => Expr::PowLog(Box::new(base.clone()), Box::new(exp), logs),
    };
    let da = a.diff(param);
    let db = b.diff(param);
    let exp_part = if db.is_zero() {
        Expr::Const(0.0)
    } else {
        Expr::mul(term(a, b.clone(), m + 1), db)
    };
    let base_part = if da.is_zero() {
        Expr::Const(0.0)
    } else {
        let bm1 = Expr::sub(b.clone(), Expr::Const(1.0));
        let mut inner = Expr::mul(b.clone(), term(a, bm1.clone(), m));
        if m > 0 {
            inner = Expr::add(inner, Expr::mul(Expr::Const(m as f64), term(a, bm1, m - 1)));
        }
        Expr::mul(inner, da)
    };
    Expr::add(exp_part, base_part)
}

fn fold(
    ctor: fn(Box<Expr>, Box<Expr>) -> Expr,
    a: Expr,
    b: Expr,
) -> Result<Expr, EvalError> {
    let node = ctor(Box::new(a), Box::new(b));
    if let Expr::Add(a, b)
    | Expr::Sub(a, b)
    | Expr::Mul(a, b)
    | Expr::Div(a, b)
    | Expr::Pow(a, b) = &node
    {
        if let (Expr::Const(_), Expr::Const(_)) = (&**a, &**b) {
            return Ok(Expr::Const(node.eval_with(&[], &|_| None)?));
        }
    }
    Ok(node)
}

fn checked_div(a: f64, b: f64) -> Result<f64, EvalError> {
    if b == 0.0 {
        Err(EvalError::DivisionByZero)
    } else {
        Ok(a / b)
    }
}

pub(crate) fn checked_pow(a: f64, b: f64) -> Result<f64, EvalError> {
    if a == 0.0 {
        return if b == 0.0 {
            Ok(1.0)
        } else if b > 0.0 {
            Ok(0.0)
        } else {
            Err(EvalError::ZeroToNegativePower)
        };
    }
    if a < 0.0 && b.fract() != 0.0 {
        return Err(EvalError::NegativeBase(a));
    }
    if b == 1.0 {
        return Ok(a);
    }
    if b == 2.0 {
        return Ok(a * a);
    }
    Ok(a.powf(b))
}

fn checked_pow_log(a: f64, b: f64, m: u32) -> Result<f64, EvalError> {
    if m == 0 {
        return checked_pow(a, b);
    }
    if a == 0.0 {
        return if b > 0.0 {
            Ok(0.0)
        } else {
            Err(EvalError::ZeroToNegativePower)
        };
    }
    if a < 0.0 {
        return Err(EvalError::NegativeBase(a));
    }
    Ok(checked_pow(a, b)? * a.ln().powi(m as i32))
}

/// `prod_i x_i (x_i - 1) ... (x_i - nu_i + 1) / nu_i!`
pub(crate) fn falling_factorial_product(
    x: &[u64],
    consumption: &[(usize, u32)],
) -> Result<f64, EvalError> {
    let mut acc = 1.0;
    for &(i, nu) in consumption {
        let xi = *x.get(i).ok_or(EvalError::SpeciesOutOfRange(i))?;
        if xi < nu as u64 {
            return Ok(0.0);
        }
        for j in 0..nu as u64 {
            acc *= (xi - j) as f64 / (j + 1) as f64;
        }
    }
    Ok(acc)
}

pub struct DisplayExpr<'a> {
    expr: &'a Expr,
    species: &'a [String],
}

// Binding strength used to decide where parentheses are needed.
fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Add(..) | Expr::Sub(..) => 1,
        Expr::Mul(..) | Expr::Div(..) => 2,
        Expr::Neg(_) => 3,
        Expr::Pow(..) => 4,
        Expr::Const(c) if *c < 0.0 => 3,
        _ => 5,
    }
}

impl DisplayExpr<'_> {
    fn child<'b>(&'b self, e: &'b Expr) -> DisplayExpr<'b> {
        DisplayExpr {
            expr: e,
            species: self.species,
        }
    }

    fn write_operand(&self, f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
        if precedence(e) < min {
            write!(f, "({})", self.child(e))
        } else {
            write!(f, "{}", self.child(e))
        }
    }
}

impl fmt::Display for DisplayExpr<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.expr {
            Expr::Const(c) => write!(f, "{}", fmt_number(*c)),
            Expr::Param(p) => write!(f, "{p}"),
            Expr::Species(i) => match self.species.get(*i) {
                Some(name) => write!(f, "{name}"),
                None => write!(f, "#{i}"),
            },
            Expr::Neg(a) => {
                write!(f, "-")?;
                self.write_operand(f, a, 4)
            }
            Expr::Add(a, b) => {
                self.write_operand(f, a, 1)?;
                write!(f, " + ")?;
                self.write_operand(f, b, 2)
            }
            Expr::Sub(a, b) => {
                self.write_operand(f, a, 1)?;
                write!(f, " - ")?;
                self.write_operand(f, b, 2)
            }
            Expr::Mul(a, b) => {
                self.write_operand(f, a, 2)?;
                write!(f, " * ")?;
                self.write_operand(f, b, 3)
            }
            Expr::Div(a, b) => {
                self.write_operand(f, a, 2)?;
                write!(f, " / ")?;
                self.write_operand(f, b, 3)
            }
            Expr::Pow(a, b) => {
                // right-associative: the base needs parens at equal precedence
                self.write_operand(f, a, 5)?;
                write!(f, "^")?;
                self.write_operand(f, b, 3)
            }
            Expr::PowLog(a, b, m) => {
                write!(f, "powlog({}, {}, {m})", self.child(a), self.child(b))
            }
            Expr::MassAction { rate, .. } => write!(f, "mass_action({})", self.child(rate)),
        }
    }
}

/// Shortest round-tripping decimal form, with a `.0`-free integer form.
pub(crate) fn fmt_number(c: f64) -> String {
    format!("{c}")
}
