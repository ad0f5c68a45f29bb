//! Reaction networks, the textual model format and propensity evaluation.

mod builtin;
mod expr;
mod kinetics;
mod parse;

pub use builtin::{builtin, builtin_names, builtin_source};
pub use expr::{EvalError, Expr, Params};
pub use kinetics::{Kinetics, SensitivityKinetics};
pub use parse::{parse_expr, parse_model, ParseError, ParseErrorKind};

use std::fmt;
use std::ops::{Deref, DerefMut};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("network must declare at least one species")]
    NoSpecies,
    #[error("network must contain at least one reaction")]
    NoReactions,
    #[error("duplicate identifier `{0}`")]
    Duplicate(String),
    #[error("unknown identifier `{name}` in {context}")]
    UnknownIdentifier { name: String, context: String },
    #[error("reaction `{reaction}`: stoichiometric vector has length {got}, expected {expected}")]
    StoichLength {
        reaction: String,
        got: usize,
        expected: usize,
    },
    #[error("reaction `{reaction}`: propensity does not vanish when `{species}` is below its consumption")]
    UnguardedConsumption { reaction: String, species: String },
    #[error("initial state has length {got}, expected {expected}")]
    StateLength { got: usize, expected: usize },
    #[error("output function must not reference parameters (found `{0}`)")]
    OutputUsesParam(String),
    #[error("parameter `{name}` has non-finite value {value}")]
    NonFiniteParam { name: String, value: f64 },
}

/// Vector of non-negative species counts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State(pub Vec<u64>);

impl State {
    pub fn zeros(d: usize) -> State {
        State(vec![0; d])
    }

    /// `self + delta`, or `None` if a coordinate would become negative.
    pub fn shifted(&self, delta: &[i64]) -> Option<State> {
        let mut out = self.clone();
        out.apply(delta).then_some(out)
    }

    /// Add `delta` in place; on failure the state is left untouched.
    pub fn apply(&mut self, delta: &[i64]) -> bool {
        if self
            .0
            .iter()
            .zip(delta)
            .any(|(&x, &dz)| dz < 0 && x < dz.unsigned_abs())
        {
            return false;
        }
        for (x, &dz) in self.0.iter_mut().zip(delta) {
            *x = x.wrapping_add_signed(dz);
        }
        true
    }
}

impl Deref for State {
    type Target = [u64];
    fn deref(&self) -> &[u64] {
        &self.0
    }
}

impl DerefMut for State {
    fn deref_mut(&mut self) -> &mut [u64] {
        &mut self.0
    }
}

impl From<Vec<u64>> for State {
    fn from(v: Vec<u64>) -> State {
        State(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reaction {
    pub name: String,
    /// Species consumed (left-hand side) with multiplicities.
    pub reactants: Vec<(usize, u32)>,
    /// Species produced (right-hand side) with multiplicities.
    pub products: Vec<(usize, u32)>,
    /// Net state change.
    pub stoich: Vec<i64>,
    pub propensity: Expr,
}

impl Reaction {
    /// Build a reaction from its two sides; the net change is derived.
    pub fn new(
        name: impl Into<String>,
        d: usize,
        reactants: Vec<(usize, u32)>,
        products: Vec<(usize, u32)>,
        propensity: Expr,
    ) -> Reaction {
        let mut stoich = vec![0i64; d];
        for &(i, n) in &reactants {
            if i < d {
                stoich[i] -= n as i64;
            }
        }
        for &(i, n) in &products {
            if i < d {
                stoich[i] += n as i64;
            }
        }
        Reaction {
            name: name.into(),
            reactants,
            products,
            stoich,
            propensity,
        }
    }

    pub fn consumption_of(&self, species: usize) -> u32 {
        self.reactants
            .iter()
            .filter(|&&(i, _)| i == species)
            .map(|&(_, n)| n)
            .sum()
    }
}

/// An output function f over states; parameter-free by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputFunction {
    expr: Expr,
}

impl OutputFunction {
    pub fn new(expr: Expr) -> Result<OutputFunction, ModelError> {
        let mut found = None;
        expr.for_each_param(&mut |p| {
            found.get_or_insert_with(|| p.to_string());
        });
        match found {
            Some(p) => Err(ModelError::OutputUsesParam(p)),
            None => Ok(OutputFunction { expr }),
        }
    }

    /// f(x) = x_i
    pub fn species(i: usize) -> OutputFunction {
        OutputFunction {
            expr: Expr::Species(i),
        }
    }

    /// Parse an expression in model syntax against the network's species.
    pub fn parse(text: &str, net: &ReactionNetwork) -> Result<OutputFunction, ModelError> {
        let expr = parse_expr(text, &net.species)?;
        OutputFunction::new(expr)
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn eval(&self, x: &[u64]) -> Result<f64, EvalError> {
        self.expr.eval_with(x, &|_| None)
    }
}

/// A validated reaction network: species, reactions, parameter values and an
/// initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct ReactionNetwork {
    pub(crate) species: Vec<String>,
    pub(crate) reactions: Vec<Reaction>,
    pub(crate) params: Params,
    pub(crate) initial: State,
}

impl ReactionNetwork {
    pub fn new(
        species: Vec<String>,
        reactions: Vec<Reaction>,
        params: Params,
        initial: State,
    ) -> Result<ReactionNetwork, ModelError> {
        let net = ReactionNetwork {
            species,
            reactions,
            params,
            initial,
        };
        net.validate()?;
        Ok(net)
    }

    fn validate(&self) -> Result<(), ModelError> {
        let d = self.species.len();
        if d == 0 {
            return Err(ModelError::NoSpecies);
        }
        if self.reactions.is_empty() {
            return Err(ModelError::NoReactions);
        }
        let mut seen = std::collections::BTreeSet::new();
        for name in self.species.iter().chain(self.params.keys()) {
            if !seen.insert(name.as_str()) {
                return Err(ModelError::Duplicate(name.clone()));
            }
        }
        let mut reaction_names = std::collections::BTreeSet::new();
        for r in &self.reactions {
            if !reaction_names.insert(r.name.as_str()) {
                return Err(ModelError::Duplicate(r.name.clone()));
            }
        }
        for (name, &value) in &self.params {
            if !value.is_finite() {
                return Err(ModelError::NonFiniteParam {
                    name: name.clone(),
                    value,
                });
            }
        }
        if self.initial.len() != d {
            return Err(ModelError::StateLength {
                got: self.initial.len(),
                expected: d,
            });
        }
        for r in &self.reactions {
            if r.stoich.len() != d {
                return Err(ModelError::StoichLength {
                    reaction: r.name.clone(),
                    got: r.stoich.len(),
                    expected: d,
                });
            }
            let mut unknown = None;
            r.propensity.for_each_param(&mut |p| {
                if !self.params.contains_key(p) && unknown.is_none() {
                    unknown = Some(p.to_string());
                }
            });
            let mut bad_species = None;
            r.propensity.for_each_species(&mut |i| {
                if i >= d {
                    bad_species = Some(format!("#{i}"));
                }
            });
            for &(i, _) in r.reactants.iter().chain(&r.products) {
                if i >= d {
                    bad_species = Some(format!("#{i}"));
                }
            }
            if let Some(name) = unknown.or(bad_species) {
                return Err(ModelError::UnknownIdentifier {
                    name,
                    context: format!("reaction `{}`", r.name),
                });
            }
            for &(i, nu) in &r.reactants {
                if !vanishes_below(&r.propensity, i, r.consumption_of(i).max(nu)) {
                    return Err(ModelError::UnguardedConsumption {
                        reaction: r.name.clone(),
                        species: self.species[i].clone(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn species(&self) -> &[String] {
        &self.species
    }

    pub fn reactions(&self) -> &[Reaction] {
        &self.reactions
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn initial_state(&self) -> &State {
        &self.initial
    }

    pub fn num_species(&self) -> usize {
        self.species.len()
    }

    pub fn num_reactions(&self) -> usize {
        self.reactions.len()
    }

    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s == name)
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.get(name).copied()
    }

    /// Copy of the network with one parameter value replaced.
    pub fn with_param(&self, name: &str, value: f64) -> Result<ReactionNetwork, ModelError> {
        if !self.params.contains_key(name) {
            return Err(ModelError::UnknownIdentifier {
                name: name.to_string(),
                context: "parameter override".into(),
            });
        }
        if !value.is_finite() {
            return Err(ModelError::NonFiniteParam {
                name: name.into(),
                value,
            });
        }
        let mut out = self.clone();
        out.params.insert(name.to_string(), value);
        Ok(out)
    }

    /// Copy of the network with a different initial state.
    pub fn with_initial(&self, initial: State) -> Result<ReactionNetwork, ModelError> {
        let mut out = self.clone();
        out.initial = initial;
        out.validate()?;
        Ok(out)
    }

    /// λ_k(x, θ) for reaction `k`.
    pub fn propensity(&self, k: usize, x: &[u64]) -> Result<f64, EvalError> {
        eval_propensity(&self.reactions[k].propensity, x, &self.params)
    }
}

/// λ(x, θ): evaluates a propensity and rejects negative results.
pub fn eval_propensity(expr: &Expr, x: &[u64], params: &Params) -> Result<f64, EvalError> {
    let v = expr.eval(x, params)?;
    if v < 0.0 {
        Err(EvalError::NegativePropensity(v))
    } else {
        Ok(v)
    }
}

/// ∂expr/∂param as a new expression.
pub fn diff_propensity(expr: &Expr, param: &str) -> Expr {
    expr.diff(param)
}

/// Structural check that `e` is 0 whenever species `i` has fewer than `nu`
/// copies.
fn vanishes_below(e: &Expr, i: usize, nu: u32) -> bool {
    match e {
        Expr::Const(c) => *c == 0.0,
        Expr::Species(j) => *j == i && nu <= 1,
        Expr::MassAction { consumption, rate } => {
            consumption
                .iter()
                .filter(|&&(j, _)| j == i)
                .map(|&(_, n)| n)
                .sum::<u32>()
                >= nu
                || vanishes_below(rate, i, nu)
        }
        Expr::Mul(a, b) => vanishes_below(a, i, nu) || vanishes_below(b, i, nu),
        Expr::Div(a, _) => vanishes_below(a, i, nu),
        Expr::Neg(a) => vanishes_below(a, i, nu),
        Expr::Add(a, b) | Expr::Sub(a, b) => vanishes_below(a, i, nu) && vanishes_below(b, i, nu),
        Expr::Pow(a, b) => matches!(**b, Expr::Const(c) if c > 0.0) && vanishes_below(a, i, nu),
        Expr::Param(_) | Expr::PowLog(..) => false,
    }
}

impl fmt::Display for ReactionNetwork {
    /// Prints the network in the textual model format.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "species {};", self.species.join(" "))?;
        for (name, value) in &self.params {
            writeln!(f, "param {name} = {};", expr::fmt_number(*value))?;
        }
        for (name, count) in self.species.iter().zip(self.initial.iter()) {
            if *count != 0 {
                writeln!(f, "init {name} = {count};")?;
            }
        }
        let side = |terms: &[(usize, u32)]| {
            terms
                .iter()
                .map(|&(i, n)| match n {
                    1 => self.species[i].clone(),
                    n => format!("{n} {}", self.species[i]),
                })
                .collect::<Vec<_>>()
                .join(" + ")
        };
        for r in &self.reactions {
            let lhs = side(&r.reactants);
            let rhs = side(&r.products);
            writeln!(
                f,
                "reaction {}: {}{}->{}{} @ {};",
                r.name,
                lhs,
                if lhs.is_empty() { "" } else { " " },
                if rhs.is_empty() { "" } else { " " },
                rhs,
                r.propensity.display(&self.species)
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn birth_death() -> ReactionNetwork {
        builtin("birth-death").unwrap()
    }

    #[test]
    fn death_propensity_is_rate_times_count() {
        let net = birth_death();
        assert_eq!(net.propensity(1, &[5]).unwrap(), 0.5);
    }

    #[test]
    fn unary_mass_action_vanishes_without_reactant() {
        let net = birth_death();
        assert_eq!(net.propensity(1, &[0]).unwrap(), 0.0);
    }

    #[test]
    fn toggle_synthesis_at_zero_repressor() {
        let net = builtin("toggle-switch").unwrap();
        assert_eq!(net.propensity(0, &[0, 0]).unwrap(), 50.0);
    }

    #[test]
    fn negative_propensity_is_a_domain_error() {
        let e = Expr::sub(Expr::Const(1.0), Expr::species(0));
        assert!(matches!(
            eval_propensity(&e, &[3], &Params::new()),
            Err(EvalError::NegativePropensity(_))
        ));
    }

    #[test]
    fn unguarded_consumption_is_rejected() {
        let src = "species A; param k = 1; reaction r: A -> @ k;";
        let err = parse_model(src).unwrap_err();
        assert!(matches!(
            err.kind,
            ParseErrorKind::Invalid(ref e) if matches!(**e, ModelError::UnguardedConsumption { .. })
        ));
    }

    #[test]
    fn state_shift_refuses_negative_counts() {
        let x = State(vec![0, 2]);
        assert_eq!(x.shifted(&[-1, 0]), None);
        assert_eq!(x.shifted(&[1, -2]), Some(State(vec![1, 0])));
    }

    #[test]
    fn wrong_stoich_length_is_rejected() {
        let mut r = Reaction::new("r", 1, vec![], vec![(0, 1)], Expr::Const(1.0));
        r.stoich.push(0);
        let err = ReactionNetwork::new(vec!["A".into()], vec![r], Params::new(), State::zeros(1));
        assert!(matches!(err, Err(ModelError::StoichLength { .. })));
    }
}
