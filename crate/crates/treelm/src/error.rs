use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed bracketed tree or action sequence. Columns are 1-based byte
    /// offsets into the offending line; the line number is 0 when the input
    /// did not come from a file.
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    /// Structurally invalid input data (vocabulary mismatches, missing
    /// proposals, unbalanced sequences, bad config combinations).
    #[error("data error: {0}")]
    Data(String),

    /// Numeric failure: NaN/Inf activations, diverging loss.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn parse_at(line: usize, column: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            column,
            message: msg.into(),
        }
    }

    /// Attach a 1-based file line number to a parse error produced from a
    /// single line.
    pub fn with_line(self, line: usize) -> Self {
        match self {
            Error::Parse {
                column, message, ..
            } => Error::Parse {
                line,
                column,
                message,
            },
            other => other,
        }
    }
}
