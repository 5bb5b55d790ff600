use thiserror::Error;

use crate::domain::DomainError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("unsupported smoothness nu = {0}; supported values are 0.5, 1.5, 2.5, 3.5")]
    UnsupportedNu(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("boundary kernels require nu > 2 (got {0})")]
    NuTooSmall(f64),
    #[error("Robin coefficient c = {c} sits on the pole |1 - c*kappa| ~ 0 for kappa = {kappa}")]
    RobinPole { c: f64, kappa: f64 },
    #[error("simulation exceeded max_time {max_time} without finishing")]
    MaxTimeExceeded { max_time: f64 },
    #[error("inducing points must be distinct and interior: {0}")]
    BadInducingPoints(String),
    #[error("linear algebra failure: {0}")]
    Factorization(String),
    #[error("precondition violated: the number of finite elements Q = {q} must exceed the design size n = {n}")]
    TooFewElements { q: usize, n: usize },
    #[error("point lies outside the unit cube: {0:?}")]
    OutsideUnitCube(Vec<f64>),
    #[error("duplicate training points at indices {0} and {1}")]
    DuplicatePoints(usize, usize),
    #[error("no hyperparameter candidate produced a factorizable Gram matrix")]
    MleFailed,
    #[error("sparse grid with {nodes} nodes exceeds the cap of {cap}")]
    GridTooLarge { nodes: usize, cap: usize },
    #[error("malformed kernel file: {0}")]
    Format(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    /// Stable machine-readable category, used as the CLI's error tag.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::UnsupportedNu(_) | Error::NuTooSmall(_) | Error::InvalidParameter(_) => {
                "parameter"
            }
            Error::RobinPole { .. } => "parameter",
            Error::MaxTimeExceeded { .. } => "simulation",
            Error::BadInducingPoints(_) | Error::DuplicatePoints(..) => "input",
            Error::Factorization(_) | Error::MleFailed => "numerical",
            Error::TooFewElements { .. } | Error::OutsideUnitCube(_) => "fem",
            Error::GridTooLarge { .. } => "capacity",
            Error::Format(_) => "format",
            Error::Io(_) | Error::Csv(_) => "io",
            Error::Config(_) => "config",
        }
    }
}
