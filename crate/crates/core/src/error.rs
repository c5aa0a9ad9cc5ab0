use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("operator output is zero at iterate {iteration}")]
    ZeroOperatorOutput { iteration: usize },

    #[error("iterate {iteration} is uncorrelated with its operator output")]
    ZeroCorrelation { iteration: usize },

    #[error("iterate {iteration} became constant: the operator removed all non-constant content")]
    ConstantIterate { iteration: usize },

    #[error("projection annihilated iterate {iteration}: it lies in the span of the basis")]
    ProjectionAnnihilated { iteration: usize },

    #[error("basis elements {i} and {j} are not orthonormal (inner product {value:e})")]
    NotOrthonormal { i: usize, j: usize, value: f64 },

    #[error("unknown operator `{0}`")]
    UnknownOperator(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
