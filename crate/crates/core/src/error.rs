use thiserror::Error;

use crate::model::ConfigViolation;

/// Errors produced by the analytic and simulation engines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("stability impossible: offered load {load} >= {servers} servers")]
    Unstable { load: f64, servers: usize },

    #[error("root solver failed for {family}: {detail}")]
    RootSolver { family: String, detail: String },

    #[error("invalid configuration: {}", join_violations(.0))]
    InvalidConfig(Vec<ConfigViolation>),

    #[error("no steady {0} exists")]
    NoSteadyMass(&'static str),

    #[error("transform size {size} leaves an estimated aliased mass of {estimate:e}")]
    Aliasing { size: usize, estimate: f64 },

    #[error("inversion produced mass {value:e} at n = {index}")]
    NegativeMass { index: usize, value: f64 },

    #[error("invalid pmf: {0}")]
    InvalidPmf(String),

    #[error("config line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("trace of length {len} is shorter than the required {required}")]
    ShortTrace { len: usize, required: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn join_violations(v: &[ConfigViolation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
