use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("letters do not connect: {0}")]
    IncompatibleLetters(String),
    #[error("loop reduces to the trivial element")]
    EmptyLoop,
    #[error("resource limit reached: {0}")]
    ResourceLimit(String),
    #[error("edge {0} has zero length outside a collapsed subgraph")]
    ZeroLengthEdge(String),
    #[error("gate closure did not stabilize within {0} iterations")]
    NotStabilized(usize),
    #[error("subgraph is not invariant: {0}")]
    NotInvariant(String),
    #[error("target {target} lies below the displacement {lambda}")]
    TargetUnreachable { target: String, lambda: String },
    #[error("no progress: {0}")]
    NoProgress(String),
    #[error("cannot fold at non-free vertex {0}")]
    IllegalFoldAtNonFree(String),
    #[error("fold amount too large: {0}")]
    DeltaTooLarge(String),
    #[error("budget of {0} exhausted")]
    BudgetExhausted(usize),
    #[error("exact arithmetic required: {0}")]
    NumericalPolicyViolation(String),
    #[error("candidate degenerate at both endpoints: {0}")]
    DegenerateCandidate(String),
    #[error("attachment data does not match: {0}")]
    AttachmentMismatch(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
}

impl Error {
    pub fn kind(&self) -> &'static str {
        match self {
            Error::IncompatibleLetters(_) => "IncompatibleLetters",
            Error::EmptyLoop => "EmptyLoop",
            Error::ResourceLimit(_) => "ResourceLimit",
            Error::ZeroLengthEdge(_) => "ZeroLengthEdge",
            Error::NotStabilized(_) => "NotStabilized",
            Error::NotInvariant(_) => "NotInvariant",
            Error::TargetUnreachable { .. } => "TargetUnreachable",
            Error::NoProgress(_) => "NoProgress",
            Error::IllegalFoldAtNonFree(_) => "IllegalFoldAtNonFree",
            Error::DeltaTooLarge(_) => "DeltaTooLarge",
            Error::BudgetExhausted(_) => "BudgetExhausted",
            Error::NumericalPolicyViolation(_) => "NumericalPolicyViolation",
            Error::DegenerateCandidate(_) => "DegenerateCandidate",
            Error::AttachmentMismatch(_) => "AttachmentMismatch",
            Error::Invalid(_) => "Invalid",
            Error::Parse { .. } => "Parse",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
