//! Per-sample sensitivity estimators and the parallel sample driver.
//!
//! Each estimator produces one realization whose mean is either S_θ(f,T)
//! (PPA, Girsanov) or the forward difference S_{θ,h}(f,T) (CRP, CFD).

mod finite_difference;
mod girsanov;
mod ppa;

pub use finite_difference::{cfd_sample, crp_sample};
pub use girsanov::girsanov_sample;
pub use ppa::{estimate_r_total, ppa_sample, PpaCalibration};

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::model::{
    Kinetics, ModelError, OutputFunction, ReactionNetwork, SensitivityKinetics, State,
};
use crate::sim::{RngStream, SimError};

/// Stream index reserved for PPA calibration; samples use 0, 1, 2, ...
pub const CALIBRATION_STREAM: u64 = u64::MAX;

pub const DEFAULT_N0: u64 = 100;
pub const DEFAULT_M0: u64 = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("method unusable at this parameter value: {0}")]
    Unusable(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("sample {index} is not finite")]
    NonFinite { index: u64 },
}

impl From<crate::model::EvalError> for EstimatorError {
    fn from(e: crate::model::EvalError) -> Self {
        EstimatorError::Sim(SimError::Eval(e))
    }
}

/// Estimator choice together with its knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Ppa { n0: u64, m0: u64 },
    Girsanov,
    Crp { h: f64 },
    Cfd { h: f64 },
}

impl Method {
    pub fn ppa() -> Method {
        Method::Ppa {
            n0: DEFAULT_N0,
            m0: DEFAULT_M0,
        }
    }

    pub fn kind(&self) -> MethodKind {
        match self {
            Method::Ppa { .. } => MethodKind::Ppa,
            Method::Girsanov => MethodKind::Girsanov,
            Method::Crp { .. } => MethodKind::Crp,
            Method::Cfd { .. } => MethodKind::Cfd,
        }
    }

    /// Finite-difference step, for the methods that have one.
    pub fn h(&self) -> Option<f64> {
        match *self {
            Method::Crp { h } | Method::Cfd { h } => Some(h),
            _ => None,
        }
    }
}

/// Method name without knobs, as used on the command line and in reports.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    Ppa,
    Girsanov,
    Crp,
    Cfd,
}

impl MethodKind {
    pub const ALL: [MethodKind; 4] = [
        MethodKind::Ppa,
        MethodKind::Girsanov,
        MethodKind::Crp,
        MethodKind::Cfd,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            MethodKind::Ppa => "ppa",
            MethodKind::Girsanov => "girsanov",
            MethodKind::Crp => "crp",
            MethodKind::Cfd => "cfd",
        }
    }

    pub fn is_finite_difference(&self) -> bool {
        matches!(self, MethodKind::Crp | MethodKind::Cfd)
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MethodKind::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown method `{s}` (expected ppa, girsanov, crp or cfd)"))
    }
}

/// Everything needed to estimate one sensitivity.
#[derive(Debug, Clone)]
pub struct SensitivityRequest {
    pub network: ReactionNetwork,
    pub param: String,
    pub f: OutputFunction,
    pub t_end: f64,
    pub x0: State,
    pub method: Method,
    pub seed: u64,
}

impl SensitivityRequest {
    /// Request starting from the network's own initial state.
    pub fn new(
        network: ReactionNetwork,
        param: impl Into<String>,
        f: OutputFunction,
        t_end: f64,
        method: Method,
        seed: u64,
    ) -> SensitivityRequest {
        let x0 = network.initial_state().clone();
        SensitivityRequest {
            network,
            param: param.into(),
            f,
            t_end,
            x0,
            method,
            seed,
        }
    }

    fn validate(&self) -> Result<(), EstimatorError> {
        let bad = |m: String| Err(EstimatorError::InvalidRequest(m));
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("horizon T must be finite and >= 0, got {}", self.t_end));
        }
        if self.x0.len() != self.network.num_species() {
            return bad(format!(
                "initial state has {} entries, network has {} species",
                self.x0.len(),
                self.network.num_species()
            ));
        }
        match self.method {
            Method::Crp { h } | Method::Cfd { h } if !(h > 0.0 && h.is_finite()) => {
                bad(format!("finite-difference step h must be positive, got {h}"))
            }
            Method::Ppa { n0, m0 } if n0 == 0 || m0 == 0 => bad("N0 and M0 must be positive".into()),
            _ => Ok(()),
        }
    }
}

/// One realization of an estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleValue {
    pub value: f64,
    /// Jumps on the main path (both paths for coupled methods).
    pub jumps: u64,
    /// PPA only: auxiliary coupled pairs requested (sum of Poisson counts).
    pub aux_paths_used: u64,
}

/// A request with its kinetics bound and, for PPA, its calibration done.
#[derive(Debug, Clone)]
pub struct Estimator {
    request: SensitivityRequest,
    sens: SensitivityKinetics,
    // Kinetics at θ + h for the finite-difference methods.
    shifted: Option<Kinetics>,
    calibration: Option<PpaCalibration>,
}

impl Estimator {
    pub fn new(request: SensitivityRequest) -> Result<Estimator, EstimatorError> {
        request.validate()?;
        let sens = SensitivityKinetics::new(&request.network, &request.param)?;
        let shifted = match request.method.h() {
            Some(h) => {
                let net = request.network.with_param(&request.param, sens.value() + h)?;
                Some(Kinetics::new(&net)?)
            }
            None => None,
        };
        if request.method == Method::Girsanov {
            girsanov::check_usable(&request.network, &request.param, sens.value())?;
        }
        let calibration = match request.method {
            Method::Ppa { n0, m0 } => {
                let mut rng = RngStream::new(request.seed, CALIBRATION_STREAM);
                let r = estimate_r_total(&sens, &request.x0, request.t_end, n0, &mut rng)?;
                Some(PpaCalibration::new(m0, n0, r))
            }
            _ => None,
        };
        Ok(Estimator {
            request,
            sens,
            shifted,
            calibration,
        })
    }

    pub fn request(&self) -> &SensitivityRequest {
        &self.request
    }

    pub fn calibration(&self) -> Option<&PpaCalibration> {
        self.calibration.as_ref()
    }

    /// Sample `index`, drawn from stream `index` of the request seed.
    pub fn sample(&self, index: u64) -> Result<SampleValue, EstimatorError> {
        let mut rng = RngStream::new(self.request.seed, index);
        let r = &self.request;
        let s = match r.method {
            Method::Ppa { .. } => ppa_sample(
                &self.sens,
                &r.x0,
                r.t_end,
                &r.f,
                self.calibration.as_ref().expect("calibrated"),
                &mut rng,
            )?,
            Method::Girsanov => girsanov_sample(&self.sens, &r.x0, r.t_end, &r.f, &mut rng)?,
            Method::Crp { h } => crp_sample(
                self.sens.kinetics(),
                self.shifted.as_ref().expect("shifted kinetics"),
                h,
                &r.x0,
                r.t_end,
                &r.f,
                &mut rng,
            )?,
            Method::Cfd { h } => cfd_sample(
                self.sens.kinetics(),
                self.shifted.as_ref().expect("shifted kinetics"),
                h,
                &r.x0,
                r.t_end,
                &r.f,
                &mut rng,
            )?,
        };
        if !s.value.is_finite() {
            return Err(EstimatorError::NonFinite { index });
        }
        Ok(s)
    }

    /// Samples for a range of indices, in index order. Work is spread over
    /// the current rayon pool; the result does not depend on its size.
    pub fn samples(&self, indices: Range<u64>) -> Result<Vec<SampleValue>, EstimatorError> {
        indices.into_par_iter().map(|i| self.sample(i)).collect()
    }
}
