use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("value {value} outside {range}")]
    OutOfRange { value: String, range: &'static str },

    #[error("depth {depth} exceeds truncation depth {kmax}")]
    DepthExceeded { depth: usize, kmax: usize },

    #[error("level index {index} out of range for depth {depth}")]
    LevelIndex { index: usize, depth: usize },

    #[error("selector leaves the admissible set at level {level}: n({level}) = {value}")]
    SelectorOutOfRange { level: usize, value: usize },

    #[error("length mismatch: {left} weights vs {right} selectors")]
    LengthMismatch { left: usize, right: usize },

    #[error("duplicate slope {0}")]
    DuplicateSlope(String),

    #[error("negative input {0} to square root")]
    NegativeSqrt(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: String, hi: String },

    #[error("schedule: {0}")]
    Schedule(String),

    #[error("frame: {0}")]
    Frame(String),

    #[error("backend: {0}")]
    Backend(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("unknown lemma id {0:?}")]
    UnknownLemma(String),

    #[error("incoherent parameters: {0}")]
    Params(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
