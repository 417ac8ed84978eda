use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index} out of range for {len} elements")]
    Index { index: usize, len: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("data error: {0}")]
    Data(String),

    /// A column of an input panel has zero sample variance.
    #[error("column {column} has zero variance")]
    DegenerateColumn { column: usize },

    #[error("singular data: {0}")]
    Singular(String),

    #[error("undefined variance: series is constant")]
    UndefinedVariance,

    #[error("sample size: {0}")]
    SampleSize(String),

    /// Design matrix is rank deficient; lists the regressor blocks involved.
    #[error("model not identified; collinear regressors: {}", collinear.join(", "))]
    Identifiability { collinear: Vec<String> },

    #[error("config error: {0}")]
    Config(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
