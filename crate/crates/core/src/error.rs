use thiserror::Error;

/// Errors surfaced by the scheduling library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("unsupported format version {found}, this build reads version {expected}")]
    Version { found: u64, expected: u64 },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    /// Converts a serde_json failure into a [`Error::Parse`] carrying the byte
    /// offset of the failure inside `text`.
    pub(crate) fn from_json(err: &serde_json::Error, text: &str) -> Self {
        Error::Parse {
            offset: byte_offset(text, err.line(), err.column()),
            message: err.to_string(),
        }
    }
}

/// serde_json reports 1-based line/column pairs; map them back to a byte index.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offset_of_second_line() {
        let text = "{\n  \"a\": ]";
        assert_eq!(byte_offset(text, 2, 8), 9);
        assert_eq!(&text[9..10], "]");
    }

    #[test]
    fn offset_clamped_to_len() {
        assert_eq!(byte_offset("abc", 1, 40), 3);
    }
}
