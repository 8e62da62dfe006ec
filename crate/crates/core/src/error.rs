use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("index {index} out of range in {op} (size {size})")]
    Index {
        op: &'static str,
        index: usize,
        size: usize,
    },

    #[error("{0}")]
    Contract(String),

    #[error("{0}")]
    Numeric(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("score {value} outside [0, 100]{}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Range { value: f64, line: Option<usize> },

    #[error("byte offset {offset}: {msg}")]
    Format { offset: usize, msg: String },

    #[error("{0}")]
    Config(String),

    #[error("no teacher prediction for pair ({src_text:?}, {mt_text:?})")]
    Lookup { src_text: String, mt_text: String },

    #[error("{0}")]
    Metric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable category, used by the CLI error line.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "dimension",
            Error::Index { .. } => "index",
            Error::Contract(_) => "contract",
            Error::Numeric(_) => "numeric",
            Error::Parse { .. } => "parse",
            Error::Range { .. } => "range",
            Error::Format { .. } => "format",
            Error::Config(_) => "config",
            Error::Lookup { .. } => "lookup",
            Error::Metric(_) => "metric",
            Error::Io(_) => "io",
        }
    }

    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }
}
