use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// The game definition produced a non-finite value or violated a declared constant.
    #[error("invalid game spec: {0}")]
    InvalidSpec(String),

    /// A control or time argument lies outside its admissible set.
    #[error("domain violation: {0}")]
    Domain(String),

    /// A lattice point or jump target left the truncated box.
    #[error("domain truncation: {0}")]
    Truncation(String),

    /// The requested integration step breaks the stability ceiling or the
    /// solution blew up.
    #[error("step size: {0}")]
    StepSize(String),

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("replica {index} failed: {source}")]
    Replica {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by bad user input rather than numerics.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_) | Error::Json(_) | Error::Io(_) | Error::Domain(_)
        )
    }
}
