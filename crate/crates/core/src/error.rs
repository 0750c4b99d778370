use thiserror::Error;

use crate::asub::IncrementSnapshotSet;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("snapshot matrix is numerically zero")]
    ZeroMatrix,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("input columns are not orthonormal (deviation {0:.3e})")]
    NonOrthonormalInput(f64),
    #[error("matrix is not on the manifold: {0}")]
    NotOnManifold(String),
    #[error("matrix logarithm undefined: eigenvalue on the closed negative real axis")]
    LogarithmUndefined,
    #[error("iteration did not converge: {0}")]
    NoConvergence(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("parameter point outside the design space: {0}")]
    OutOfBounds(String),
    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),
    #[error("singular linear system: {0}")]
    SingularSystem(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no point of the design space maps to the requested reduced coordinates")]
    Infeasible,
    #[error("candidate set is empty")]
    EmptyCandidateSet,
    #[error("database is empty")]
    EmptyDatabase,
    #[error("kernel matrix is singular (condition estimate {0:.3e})")]
    SingularKernelMatrix(f64),
    #[error("database has not been made consistent")]
    InconsistentDatabase,
    #[error("reduced mass operator is singular")]
    SingularCalA,
    #[error("degenerate mode: {0}")]
    DegenerateMode(String),
    #[error("line search failed to reduce the merit function")]
    LinesearchFailure,
    #[error("quadratic subproblem is infeasible")]
    QpInfeasible,
    #[error("initial point violates the design-space bounds by {0:.3e}")]
    InfeasibleStart(f64),
    #[error("optimizer failed ({status}); {} partial snapshots retained", partial.snapshots.ncols())]
    OptimizerFailed {
        status: String,
        partial: Box<IncrementSnapshotSet>,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("database format version {found} is not supported (expected {expected})")]
    FormatVersionMismatch { found: u64, expected: u64 },
    #[error("database digest {found} does not match the model digest {expected}")]
    DigestMismatch { found: String, expected: String },
}
