use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dimension must be at least 1")]
    ZeroDimension,

    #[error("half-space normal must be nonzero")]
    ZeroNormal,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("tolerance must be positive and finite, got {0}")]
    InvalidTolerance(f64),

    #[error("half-space index {index} out of range for {count} half-spaces")]
    IndexOutOfRange { index: usize, count: usize },

    #[error("matrix is not symmetric")]
    NotSymmetric,

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("invalid face lattice: {0}")]
    InvalidLattice(String),

    #[error("faces {0} and {1} do not share a subface")]
    FacesNotAdjacent(usize, usize),

    #[error("subset budget exceeded: {subsets} subsets > {budget}")]
    SubsetBudgetExceeded { subsets: u128, budget: u128 },

    #[error("no examined record for superspace {0:?}")]
    MissingSuperspaceRecord(Vec<usize>),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("thread pool: {0}")]
    ThreadPool(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
