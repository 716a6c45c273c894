use thiserror::Error;

/// Errors raised anywhere in the explanation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("layout parse error at line {line}, column {col}: unexpected character {ch:?}")]
    LayoutParse { line: usize, col: usize, ch: char },

    #[error("state enumeration truncated after {cap} states")]
    Truncated { cap: usize },

    #[error("value iteration did not converge after {iters} iterations (residual {residual:e})")]
    NotConverged { iters: usize, residual: f64 },

    #[error("state {0} is not part of the state space")]
    UnknownState(String),

    #[error("state index {index} out of range for {len} states")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid transition model: {0}")]
    InvalidModel(String),

    #[error("no path from state {from} to state {to}")]
    NoPath { from: usize, to: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("missing Q value for state {0}")]
    MissingQ(usize),

    #[error("cannot decode state {0:?}")]
    Decode(String),

    #[error("render error: {0}")]
    Render(String),

    #[error("cache error: {0}")]
    Cache(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wrap an error with the name of the pipeline stage that produced it.
    pub fn at(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |source| Error::Stage {
            stage,
            source: Box::new(source),
        }
    }

    /// True for errors that originate from user configuration rather than a
    /// failure inside the pipeline.
    pub fn is_config(&self) -> bool {
        match self {
            Error::InvalidConfig(_) | Error::LayoutParse { .. } => true,
            Error::Stage { source, .. } => source.is_config(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
