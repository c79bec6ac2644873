use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected:?}, got {got:?}")]
    Shape {
        op: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("non-finite value produced by `{op}`")]
    NonFinite { op: &'static str },
    #[error("{op}: argument {value} outside [{lo}, {hi}]")]
    Domain {
        op: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("{op}: singular at t = {t} (guard {guard})")]
    Singular { op: &'static str, t: f64, guard: f64 },
    #[error("unknown condition id {id} (vocabulary size {size})")]
    UnknownCondition { id: usize, size: usize },
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("architecture mismatch: {0}")]
    Architecture(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged at step {step}: {reason}")]
    Diverged { step: u64, reason: String },
    #[error("rollout produced a non-finite state at step {step}")]
    Rollout { step: usize },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
