use thiserror::Error;

/// Errors shared by every engine layer. Queries never guess: anything the
/// engine cannot decide within its budget or typing rules comes back as one
/// of these instead of a wrong answer.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("point map is not injective: {0}")]
    NotInjective(String),

    #[error("set map is not injective: {0}")]
    SetMapNotInjective(String),

    #[error("compatibility violated at point {point} and set {set}")]
    CompatibilityViolation { point: String, set: String },

    #[error("unknown set id S{0}")]
    UnknownSet(u32),

    #[error("unknown demand id d{0}")]
    UnknownDemand(u32),

    #[error("level mismatch: point at level {point_level}, set at level {set_level}")]
    LevelMismatch { point_level: u32, set_level: u32 },

    #[error("level mismatch: {0}")]
    WrongLevel(String),

    #[error("evaluation budget of {budget} steps exceeded during {what}")]
    BudgetExceeded { budget: u64, what: String },

    #[error("no separating point found for S{left} and S{right} within bound {bound}")]
    SeparationFailure { left: u32, right: u32, bound: u64 },

    #[error("generator list is not closed under complement: {0}")]
    NotComplementClosed(String),

    #[error("selector must pick exactly one of each complementary pair: {0}")]
    BadSelector(String),

    #[error("syntax error at line {line}, column {col}: {msg}")]
    Syntax { line: u32, col: u32, msg: String },

    #[error("undeclared name {0}")]
    Undeclared(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("dump was written by incompatible version {found}, expected {expected}")]
    VersionMismatch { found: String, expected: String },

    #[error("dump is corrupt: {0}")]
    CorruptDump(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
