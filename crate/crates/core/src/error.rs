use thiserror::Error;

/// Every failure the pipeline can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("row {row}: cannot parse timestamp {value:?} (expected yyyy-mm-dd HH:MM:SS)")]
    Timestamp { row: usize, value: String },

    #[error("row {row}: cannot parse EVENT value {value:?}")]
    Label { row: usize, value: String },

    #[error("schema error: missing required column {0:?}")]
    MissingColumn(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("row {row}: timestamps must be strictly increasing")]
    Ordering { row: usize },

    #[error("channel {0} has no observed values and cannot be filled")]
    UnfixableChannel(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("labels contain a single class; both classes are required")]
    DegenerateLabels,

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("shape mismatch: expected {expected} columns, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("need more than {k} minority samples, found {found}")]
    InsufficientMinority { k: usize, found: usize },

    #[error("stratification impossible: class with {count} samples cannot fill {k} folds")]
    Stratification { count: usize, k: usize },

    #[error("channel {channel}: {source}")]
    Channel {
        channel: String,
        #[source]
        source: Box<Error>,
    },

    #[error("repeat {repeat}, fold {fold}: {source}")]
    Fold {
        repeat: usize,
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("task script line {line}, column {column}: {message}")]
    TaskSyntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid task: {0}")]
    TaskValidation(String),

    #[error("line protocol: {0}")]
    LineProtocol(String),

    #[error("scoring error: channel {0} missing from stream point")]
    ChannelGap(String),

    #[error("model document: {0}")]
    ModelFormat(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wraps `self` with the channel it was raised for.
    pub fn for_channel(self, channel: impl Into<String>) -> Self {
        Error::Channel {
            channel: channel.into(),
            source: Box::new(self),
        }
    }

    /// True for failures caused by numerics rather than input or arguments.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Numerical(_) | Error::DegenerateInput(_) | Error::DegenerateLabels => true,
            Error::Channel { source, .. } | Error::Fold { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
