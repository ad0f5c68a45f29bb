//! Turning command-line values into networks, requests and references.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crnsens::estimators::{EstimatorError, Method, MethodKind, SensitivityRequest};
use crnsens::model::{builtin, builtin_names, parse_model, OutputFunction, ReactionNetwork};
use crnsens::oracle::{exact_sensitivity_affine, OracleError};
use crnsens::stats::StatsError;

/// Failure of a command, with its process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Model(String),
    #[error("{0}")]
    Unusable(String),
    #[error("{0}")]
    NonAffine(String),
    #[error("{0}")]
    Runtime(String),
}

pub mod exit {
    pub const OK: i32 = 0;
    pub const RUNTIME: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const MODEL: i32 = 3;
    pub const UNUSABLE: i32 = 4;
    pub const TARGET_NOT_REACHED: i32 = 5;
    pub const NON_AFFINE: i32 = 6;
    pub const PARTIAL: i32 = 7;
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Model(_) => exit::MODEL,
            CliError::Unusable(_) => exit::UNUSABLE,
            CliError::NonAffine(_) => exit::NON_AFFINE,
            CliError::Runtime(_) => exit::RUNTIME,
        }
    }
}

impl From<EstimatorError> for CliError {
    fn from(e: EstimatorError) -> Self {
        match e {
            EstimatorError::Unusable(_) => CliError::Unusable(e.to_string()),
            EstimatorError::Model(_) => CliError::Model(e.to_string()),
            EstimatorError::InvalidRequest(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        match e {
            StatsError::Estimator(e) => e.into(),
            StatsError::DegenerateReference | StatsError::InvalidPolicy(_) => {
                CliError::Usage(e.to_string())
            }
            StatsError::TooFewSamples(_) => CliError::Usage(e.to_string()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::NonAffine(_) | OracleError::NonlinearOutput => {
                CliError::NonAffine(e.to_string())
            }
            OracleError::Model(_) => CliError::Model(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

/// Load `builtin:<name>` or a model file.
pub fn load_model(spec: &str) -> Result<ReactionNetwork, CliError> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        return builtin(name).ok_or_else(|| {
            let known: Vec<_> = builtin_names().collect();
            CliError::Usage(format!(
                "unknown built-in model `{name}` (available: {})",
                known.join(", ")
            ))
        });
    }
    let text = std::fs::read_to_string(spec)
        .map_err(|e| CliError::Usage(format!("cannot read model file `{spec}`: {e}")))?;
    parse_model(&text).map_err(|e| CliError::Model(format!("{spec}:{e}")))
}

/// `name=value` from `--set`.
pub fn parse_assignment(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected name=value, got `{s}`"))?;
    let v: f64 = v
        .trim()
        .parse()
        .map_err(|_| format!("`{}` is not a number", v.trim()))?;
    Ok((k.trim().to_string(), v))
}

/// Apply overrides: parameters get new values, species get new initial
/// counts.
pub fn apply_overrides<'a>(
    mut net: ReactionNetwork,
    sets: impl IntoIterator<Item = (&'a String, &'a f64)>,
) -> Result<ReactionNetwork, CliError> {
    for (name, &value) in sets {
        if net.param(name).is_some() {
            net = net
                .with_param(name, value)
                .map_err(|e| CliError::Usage(e.to_string()))?;
        } else if let Some(i) = net.species_index(name) {
            if value < 0.0 || value.fract() != 0.0 || value > u32::MAX as f64 {
                return Err(CliError::Usage(format!(
                    "initial count for `{name}` must be a non-negative integer, got {value}"
                )));
            }
            let mut x0 = net.initial_state().clone();
            x0[i] = value as u64;
            net = net
                .with_initial(x0)
                .map_err(|e| CliError::Usage(e.to_string()))?;
        } else {
            return Err(CliError::Usage(format!(
                "`{name}` is neither a parameter nor a species of the model"
            )));
        }
    }
    Ok(net)
}

/// Reference value for the confidence level: a number, or `oracle` for the
/// exact affine-network value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Reference {
    Value(f64),
    #[serde(with = "oracle_tag")]
    Oracle,
}

mod oracle_tag {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("oracle")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        if s == "oracle" {
            Ok(())
        } else {
            Err(de::Error::custom(format!("expected a number or \"oracle\", got \"{s}\"")))
        }
    }
}

impl FromStr for Reference {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("oracle") {
            return Ok(Reference::Oracle);
        }
        s.parse()
            .map(Reference::Value)
            .map_err(|_| format!("expected a number or `oracle`, got `{s}`"))
    }
}

impl fmt::Display for Reference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reference::Value(v) => write!(f, "{v}"),
            Reference::Oracle => f.write_str("oracle"),
        }
    }
}

impl Reference {
    pub fn resolve(
        &self,
        net: &ReactionNetwork,
        param: &str,
        f: &OutputFunction,
        t_end: f64,
    ) -> Result<f64, CliError> {
        match *self {
            Reference::Value(v) => Ok(v),
            Reference::Oracle => Ok(exact_sensitivity_affine(net, param, f, t_end)?),
        }
    }
}

/// Everything that identifies one estimation problem.
#[derive(Debug, Clone)]
pub struct Problem {
    pub network: ReactionNetwork,
    pub param: String,
    pub f: OutputFunction,
    pub t_end: f64,
}

impl Problem {
    pub fn new(
        network: ReactionNetwork,
        param: &str,
        f: &str,
        t_end: f64,
    ) -> Result<Problem, CliError> {
        if network.param(param).is_none() {
            return Err(CliError::Usage(format!("model has no parameter `{param}`")));
        }
        if !(t_end >= 0.0 && t_end.is_finite()) {
            return Err(CliError::Usage(format!("T must be finite and >= 0, got {t_end}")));
        }
        let f = OutputFunction::parse(f, &network)
            .map_err(|e| CliError::Usage(format!("bad output function `{f}`: {e}")))?;
        Ok(Problem {
            network,
            param: param.to_string(),
            f,
            t_end,
        })
    }

    pub fn request(&self, method: Method, seed: u64) -> SensitivityRequest {
        SensitivityRequest::new(
            self.network.clone(),
            self.param.clone(),
            self.f.clone(),
            self.t_end,
            method,
            seed,
        )
    }
}

/// Combine a method name with its knobs.
pub fn method_from(kind: MethodKind, h: Option<f64>, n0: u64, m0: u64) -> Result<Method, CliError> {
    match (kind, h) {
        (MethodKind::Ppa, None) => Ok(Method::Ppa { n0, m0 }),
        (MethodKind::Girsanov, None) => Ok(Method::Girsanov),
        (MethodKind::Crp, Some(h)) => Ok(Method::Crp { h }),
        (MethodKind::Cfd, Some(h)) => Ok(Method::Cfd { h }),
        (k, Some(_)) => Err(CliError::Usage(format!("--h only applies to crp and cfd, not {k}"))),
        (k, None) => Err(CliError::Usage(format!("method {k} needs --h"))),
    }
}
