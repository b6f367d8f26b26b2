use thiserror::Error;

/// Errors raised by the monitoring toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error(transparent)]
    Eval(#[from] EvalError),

    #[error("atom `{atom}` at t={t}: {source}")]
    Atom {
        t: i64,
        atom: String,
        #[source]
        source: EvalError,
    },

    #[error(
        "insufficient horizon: evaluating at t={t} needs timestamps up to {required}, flowpipe ends at {available}"
    )]
    InsufficientHorizon { t: i64, required: i64, available: i64 },

    #[error("confidence required: atom `{0}` has no confidence level (`@ ?`)")]
    ConfidenceRequired(String),

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("invalid flowpipe: {}", .0.join("; "))]
    InvalidFlowpipe(Vec<String>),

    #[error("pair {index}: {source}")]
    Pair {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{} of the dataset's pairs failed; first: {}", .0.len(), .0[0])]
    Dataset(Vec<Error>),

    #[error("schema {schema}, pair {index}: generator failed: {source}")]
    Generator {
        schema: String,
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax,
    SingleVariable,
    Range,
}

/// A formula that failed to parse, with the byte offset of the problem.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{} at position {position}: {message}", match .kind {
    ParseErrorKind::Syntax => "syntax error",
    ParseErrorKind::SingleVariable => "single-variable atom error",
    ParseErrorKind::Range => "range error",
})]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub position: usize,
    pub message: String,
}

/// Domain violation while evaluating an expression at `x`.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{message} (x = {x})")]
pub struct EvalError {
    pub x: f64,
    pub message: String,
}
