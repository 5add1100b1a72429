use thiserror::Error;

/// Failures surfaced by the toolkit. The CLI maps these onto distinct
/// process exit codes, see [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("numerical blowup at step {step}: {context}")]
    Blowup { step: u64, context: String },

    #[error("state left the physical manifold: {0}")]
    Domain(String),

    #[error("rank deficiency in columns {columns:?}")]
    RankDeficient { columns: Vec<usize> },

    #[error("insufficient trajectory history: need {required} states, have {available}")]
    InsufficientHistory { required: usize, available: usize },

    #[error("Arnoldi breakdown in loop {loop_index}: {replaced} dependent columns exceed the replacement budget of 3")]
    Breakdown { loop_index: usize, replaced: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Exit code for the CLI: 2 config, 3 numerics, 4 verification, 1 other.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::Blowup { .. } | Error::Domain(_) => 3,
            Error::Verification(_) => 4,
            _ => 1,
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
