//! Benchmark suites: a list of estimation cases run back to back.
//!
//! A suite file is JSON:
//!
//! ```json
//! {
//!   "scale": 0.1,
//!   "seed": 1,
//!   "cases": [
//!     { "model": "builtin:birth-death", "param": "theta2", "f": "S", "T": 20,
//!       "method": "ppa", "target_p": 0.95, "reference": "oracle" },
//!     { "model": "builtin:birth-death", "param": "theta2", "f": "S", "T": 100,
//!       "method": "cfd", "n": 10000, "h": [0.1, 0.01], "reference": -9.995 }
//!   ]
//! }
//! ```
//!
//! Adaptive cases (`target_p`) walk the h-schedule for crp/cfd and keep the
//! first h that reaches the target. Fixed cases (`n`) emit one row per h.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crnsens::estimators::{MethodKind, DEFAULT_M0, DEFAULT_N0};
use crnsens::stats::{run_adaptive, run_fixed, AdaptivePolicy, EstimateReport, DEFAULT_N_MAX};

use crate::record::ResultRecord;
use crate::setup::{apply_overrides, load_model, method_from, CliError, Problem, Reference};

/// h values tried by adaptive finite-difference cases without a schedule.
pub const DEFAULT_H_SCHEDULE: [f64; 6] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6];

/// Standard errors outside the 5% interval at which an adaptive
/// finite-difference run is abandoned in favour of the next h.
pub const FD_BIAS_STOP_Z: f64 = 8.0;

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Case {
    pub model: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub set: BTreeMap<String, f64>,
    pub param: String,
    pub f: String,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub method: MethodKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Reference>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n0: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m0: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "one")]
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSuite {
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub seed: u64,
    pub cases: Vec<Case>,
}

fn in_unit(s: f64) -> bool {
    s > 0.0 && s <= 1.0
}

impl Case {
    /// Model column: the model spec plus any overrides, e.g.
    /// `builtin:gene-expression[theta4=0]`.
    pub fn label(&self) -> String {
        if self.set.is_empty() {
            return self.model.clone();
        }
        let sets: Vec<String> = self.set.iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!("{}[{}]", self.model, sets.join(","))
    }

    fn check(&self, i: usize) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Usage(format!("case {i} ({}): {m}", self.label())));
        if !in_unit(self.scale) {
            return bad(format!("scale must lie in (0, 1], got {}", self.scale));
        }
        match (self.n, self.target_p) {
            (Some(_), Some(_)) | (None, None) => {
                return bad("give exactly one of `n` and `target_p`".into())
            }
            (None, Some(_)) if self.reference.is_none() => {
                return bad("`target_p` needs a `reference`".into())
            }
            (Some(_), None) if self.n_max.is_some() => {
                return bad("`n_max` only applies to adaptive cases".into())
            }
            _ => {}
        }
        let fd = self.method.is_finite_difference();
        match &self.h {
            Some(_) if !fd => return bad(format!("method {} takes no h", self.method)),
            Some(hs) if hs.is_empty() => return bad("empty h schedule".into()),
            Some(hs) if hs.iter().any(|&h| !(h > 0.0 && h.is_finite())) => {
                return bad("h values must be positive".into())
            }
            None if fd && self.n.is_some() => {
                return bad("fixed-size finite-difference cases need an `h` list".into())
            }
            _ => {}
        }
        Ok(())
    }

    fn problem(&self) -> Result<Problem, CliError> {
        let net = apply_overrides(load_model(&self.model)?, &self.set)?;
        Problem::new(net, &self.param, &self.f, self.t_end)
    }
}

impl BenchmarkSuite {
    pub fn from_json(text: &str) -> Result<BenchmarkSuite, CliError> {
        let suite: BenchmarkSuite = serde_json::from_str(text)
            .map_err(|e| CliError::Usage(format!("bad suite file: {e}")))?;
        suite.validate()?;
        Ok(suite)
    }

    pub fn load(path: &Path) -> Result<BenchmarkSuite, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Usage(format!("cannot read suite file `{}`: {e}", path.display()))
        })?;
        BenchmarkSuite::from_json(&text)
    }

    /// Structural checks plus: every model, parameter and output resolves.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.cases.is_empty() {
            return Err(CliError::Usage("suite has no cases".into()));
        }
        if !in_unit(self.scale) {
            return Err(CliError::Usage(format!(
                "suite scale must lie in (0, 1], got {}",
                self.scale
            )));
        }
        for (i, c) in self.cases.iter().enumerate() {
            c.check(i)?;
            c.problem()?;
        }
        Ok(())
    }

    pub fn with_scale(mut self, scale: f64) -> Result<BenchmarkSuite, CliError> {
        if !in_unit(scale) {
            return Err(CliError::Usage(format!("scale must lie in (0, 1], got {scale}")));
        }
        self.scale *= scale;
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> BenchmarkSuite {
        self.seed = seed;
        self
    }

    pub fn builtin(name: &str) -> Option<BenchmarkSuite> {
        match name {
            "paper" => Some(paper_suite()),
            "pitfalls" => Some(pitfalls_suite()),
            _ => None,
        }
    }
}

pub const BUILTIN_SUITES: [&str; 2] = ["paper", "pitfalls"];

fn case(model: &str, param: &str, f: &str, t_end: f64, method: MethodKind) -> Case {
    Case {
        model: format!("builtin:{model}"),
        set: BTreeMap::new(),
        param: param.into(),
        f: f.into(),
        t_end,
        method,
        reference: None,
        target_p: None,
        n: None,
        h: None,
        n_max: None,
        n0: None,
        m0: None,
        seed: None,
        scale: 1.0,
    }
}

/// The comparison grid of the four example networks at p = 0.95, every
/// method. Girsanov is left out where θ = 0 makes it unusable.
fn paper_suite() -> BenchmarkSuite {
    let mut cases = Vec::new();
    let mut push = |model: &str, set: &[(&str, f64)], param: &str, f: &str, t_end: f64, r: Reference| {
        for method in MethodKind::ALL {
            if method == MethodKind::Girsanov && set.iter().any(|&(k, v)| k == param && v == 0.0) {
                continue;
            }
            let mut c = case(model, param, f, t_end, method);
            c.set = set.iter().map(|&(k, v)| (k.to_string(), v)).collect();
            c.reference = Some(r);
            c.target_p = Some(0.95);
            cases.push(c);
        }
    };
    for t in [20.0, 100.0] {
        push("birth-death", &[], "theta2", "S", t, Reference::Oracle);
    }
    for t in [20.0, 100.0] {
        for theta in [0.0693, 0.0023, 0.0] {
            push("gene-expression", &[("theta4", theta)], "theta4", "P", t, Reference::Oracle);
        }
    }
    for (param, r) in [
        ("theta5", -240.368),
        ("theta6", 47.0746),
        ("theta8", -127.629),
        ("theta12", 1469.81),
        ("theta14", 0.1424),
    ] {
        push("circadian-clock", &[], param, "S4", 5.0, Reference::Value(r));
    }
    for (param, r) in [
        ("alpha1", 1.19),
        ("alpha2", -2.107),
        ("beta", -5.9571),
        ("gamma", 54.7495),
    ] {
        push("toggle-switch", &[], param, "U", 10.0, Reference::Value(r));
    }
    BenchmarkSuite {
        scale: 1.0,
        seed: 1,
        cases,
    }
}

/// Birth-death at T = 100 with too-large steps: a fixed 10⁴ samples for
/// h = 0.1 and h = 0.01.
fn pitfalls_suite() -> BenchmarkSuite {
    let cases = [MethodKind::Cfd, MethodKind::Crp]
        .into_iter()
        .map(|m| {
            let mut c = case("birth-death", "theta2", "S", 100.0, m);
            c.reference = Some(Reference::Oracle);
            c.n = Some(10_000);
            c.h = Some(vec![0.1, 0.01]);
            c
        })
        .collect();
    BenchmarkSuite {
        scale: 1.0,
        seed: 1,
        cases,
    }
}

/// Rows produced by a suite, plus whether every adaptive case hit its target.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOutcome {
    pub records: Vec<ResultRecord>,
    pub complete: bool,
}

fn scaled(n: u64, scale: f64, floor: u64) -> u64 {
    ((n as f64 * scale).round() as u64).max(floor)
}

/// Run every case in order. `progress` sees each row as it is produced.
pub fn run_suite(
    suite: &BenchmarkSuite,
    timing: bool,
    mut progress: impl FnMut(&ResultRecord),
) -> Result<SuiteOutcome, CliError> {
    let mut records = Vec::new();
    let mut complete = true;
    for c in &suite.cases {
        let problem = c.problem()?;
        let reference = c
            .reference
            .map(|r| r.resolve(&problem.network, &problem.param, &problem.f, problem.t_end))
            .transpose()?;
        let scale = suite.scale * c.scale;
        let seed = c.seed.unwrap_or(suite.seed);
        let n0 = c.n0.unwrap_or(DEFAULT_N0);
        let m0 = c.m0.unwrap_or(DEFAULT_M0);
        let mut emit = |report: &EstimateReport| {
            let r = ResultRecord::from_report(&c.label(), &c.param, c.t_end, report, timing);
            progress(&r);
            records.push(r);
        };

        let hs: Vec<Option<f64>> = match (&c.h, c.method.is_finite_difference()) {
            (Some(hs), _) => hs.iter().copied().map(Some).collect(),
            (None, true) => DEFAULT_H_SCHEDULE.iter().copied().map(Some).collect(),
            (None, false) => vec![None],
        };

        if let Some(n) = c.n {
            let n = scaled(n, scale, 2);
            for h in hs {
                let method = method_from(c.method, h, n0, m0)?;
                emit(&run_fixed(problem.request(method, seed), n, reference)?);
            }
            continue;
        }

        let target = c.target_p.expect("validated: adaptive case");
        let reference = reference.expect("validated: adaptive case has a reference");
        let n_max = scaled(c.n_max.unwrap_or(DEFAULT_N_MAX), scale, 100);
        let mut policy = AdaptivePolicy::new(target).with_n_max(n_max);
        if c.method.is_finite_difference() {
            policy = policy.with_bias_stop(FD_BIAS_STOP_Z);
        }
        let mut last = None;
        for h in hs {
            let method = method_from(c.method, h, n0, m0)?;
            let report = run_adaptive(problem.request(method, seed), &policy, reference)?;
            let met = report.target_met == Some(true);
            last = Some(report);
            if met {
                break;
            }
        }
        let report = last.expect("schedule is non-empty");
        complete &= report.target_met == Some(true);
        emit(&report);
    }
    Ok(SuiteOutcome { records, complete })
}
