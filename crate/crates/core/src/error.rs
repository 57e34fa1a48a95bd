use thiserror::Error;

use crate::setting::Setting;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("probability {0} outside the open interval (0, 1)")]
    ProbabilityDomain(f64),

    #[error("empty trial class: {0}")]
    EmptyTrialClass(&'static str),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate fit input: {0}")]
    Degenerate(String),

    #[error("no saturating trend in the data")]
    NoSaturatingTrend,

    #[error("threshold unattainable within [0, {domain_max}]")]
    Unattainable { domain_max: f64 },

    #[error("geometry mismatch: {expected} vs {found}")]
    GeometryMismatch { expected: String, found: String },

    #[error("setting {0} not available")]
    UnknownSetting(Setting),

    #[error("time went backwards: {now_ms} ms after {last_ms} ms")]
    NonMonotonicTime { last_ms: f64, now_ms: f64 },

    #[error("trial already ended")]
    TrialEnded,

    #[error("unknown key code {0:?}")]
    UnknownKey(String),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("unsupported schema {found:?}, expected {expected:?}")]
    UnsupportedVersion { expected: &'static str, found: String },

    #[error("{} setting fit(s) failed: {}", .0.len(), crate::dataset::describe_failures(.0))]
    FitFailed(Vec<crate::dataset::FitFailure>),

    #[error("parse error: {0}")]
    Parse(String),
}
