//! Hypocoercive finite elements for the stationary and time-dependent
//! Kolmogorov equation `u_t + v u_x - eps u_vv = f` on a position-velocity
//! rectangle, together with the associated optimal control problem.

pub mod analysis;
pub mod assembly;
pub mod elements;
pub mod linalg;
pub mod manufactured;
pub mod mesh;
pub mod solvers;
pub mod space;

pub use analysis::{Constants, ErrorReport, NormVariant};
pub use assembly::HParams;
pub use linalg::{LinearSolveReport, SparseOperator};
pub use manufactured::{Expr, Jet4, ManufacturedCase};
pub use mesh::{BoundaryLabel, Diagonal, Facet, Mesh};
pub use solvers::{KktSolution, Trajectory};
pub use space::{Constraint, DiscreteField, FunctionSpace};

/// Library version echoed in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Errors raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("structurally singular matrix")]
    StructurallySingular,
    #[error("solver breakdown: {0}")]
    Breakdown(String),
    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    MaxIterations { iterations: usize, residual: f64 },
    #[error("memory guard: {0}")]
    MemoryGuard(String),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
