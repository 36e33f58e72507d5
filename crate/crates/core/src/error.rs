use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("refused: {0}")]
    Refused(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unsupported signal format {0}")]
    UnsupportedFormat(u32),

    #[error("bad model container: {0}")]
    BadContainer(String),

    #[error("unsupported container version {found:?} (expected {expected:?})")]
    ContainerVersion { found: char, expected: char },

    #[error("missing data file {}", .0.display())]
    MissingData(PathBuf),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures caused by numerical breakdown rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NotPositiveDefinite(_))
    }

    /// True for failures caused by absent or malformed data files.
    pub fn is_data(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::UnsupportedFormat(_)
                | Error::BadContainer(_)
                | Error::ContainerVersion { .. }
                | Error::MissingData(_)
                | Error::Io(_)
                | Error::Csv(_)
        )
    }
}
