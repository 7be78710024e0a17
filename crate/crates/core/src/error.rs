use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("quadrature budget exhausted at offset {offset:?}: estimated relative error {estimate:.3e}")]
    QuadratureBudget { offset: (usize, usize), estimate: f64 },
    #[error("eigensolver did not converge after {iterations} iterations")]
    EigenNonConvergence { iterations: usize },
    #[error("level {level} out of range: {available} distinct eigenvalues available")]
    LevelOutOfRange { level: usize, available: usize },
    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { what: &'static str, iterations: usize, residual: f64 },
    #[error("bubble support leaves the domain: {0}")]
    SupportOutsideDomain(String),
    #[error("sample {index} violates I(u,a,b) <= 0 (value {value:.6e})")]
    ConstraintViolated { index: usize, value: f64 },
    #[error("not enough valid points for a slope fit ({0})")]
    FitDegenerate(usize),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
