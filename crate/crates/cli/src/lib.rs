//! Command-line front end for `crnsens`: model loading, result records and
//! benchmark suites. The binary lives in `main.rs`.

pub mod record;
pub mod setup;
pub mod suite;
