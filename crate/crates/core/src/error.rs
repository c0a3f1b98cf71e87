use thiserror::Error;

/// Failure modes shared by every estimator and oracle in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A Gram matrix `Z'Z` had a pivot below the singularity tolerance.
    #[error("singular Gram matrix: pivot {pivot} of {dim} fell below tolerance (too few units or collinear covariates)")]
    SingularGram { pivot: usize, dim: usize },

    /// Leave-one-out quantity requested for a unit whose leverage is numerically one.
    #[error("leverage of unit {index} is numerically one; leave-one-out fit undefined")]
    LeverageOne { index: usize },

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("enumeration of {count} assignments exceeds cap {cap}")]
    TooLarge { count: u128, cap: u128 },

    #[error("unsupported moment pattern: {0}")]
    Unsupported(String),

    /// The worst-case error objective is identically zero (constant leverages).
    #[error("worst-case objective is degenerate: leverages are constant")]
    DegenerateObjective,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("stratum {stratum}: {source}")]
    Stratum {
        stratum: i64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Strips stratum annotations and returns the underlying failure.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stratum { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for failures caused by the numerical state of a fit rather than by bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            Error::SingularGram { .. } | Error::LeverageOne { .. } | Error::DegenerateObjective
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
