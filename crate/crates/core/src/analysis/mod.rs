//! Error norms, stability constants and local kernel certification.

mod dense;
pub mod errors;
pub mod kernels;
pub mod stability;

use thiserror::Error;

pub use dense::MAX_DENSE_DOFS;
pub use errors::{
    average_rate, compute_errors, convergence_rates, ConvergenceTable, ErrorReport, ExactSolution,
};
pub use kernels::{atom_function, kernel_dimension, AtomFunction, Expected, KernelReport, Patch};
pub use stability::{
    estimate_inf_sup, estimate_korn, InfSupEstimate, KornEstimate, StabilityReport, VelocityNorm,
};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("{what} has {dofs} DOFs; dense estimates are limited to {max} (use a coarser mesh)")]
    TooLarge {
        what: String,
        dofs: usize,
        max: usize,
    },
    #[error("{0} is empty")]
    Empty(String),
    #[error("Gram matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("dense eigen/singular value decomposition failed")]
    EigenFailure,
    #[error("the Korn constant needs a nonempty Dirichlet boundary")]
    NoDirichletBoundary,
    #[error("invalid patch: {0}")]
    Patch(String),
    #[error(transparent)]
    Mesh(#[from] crate::mesh::MeshError),
}
