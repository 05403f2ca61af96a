//! Error type shared by all core modules.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("region rectangle {0:?} is not aligned to the grid spacing {1}")]
    NonAlignedRegion([f64; 4], f64),
    #[error("feature and interest regions overlap")]
    OverlappingFs,
    #[error("region rectangle {0:?} is degenerate")]
    EmptyRegion([f64; 4]),
    #[error("unknown region `{0}`")]
    UnknownRegion(String),
    #[error("no permittivity declared for region `{0}`")]
    MissingMaterial(String),
    #[error("primal system has no Dirichlet nodes; the reduced operator is singular")]
    NoDirichletNodes,
    #[error("solver did not converge: residual {residual:.3e} > tol {tol:.3e} after {iterations} iterations")]
    NotConverged {
        residual: f64,
        tol: f64,
        iterations: usize,
    },
    #[error("system is singular or not positive definite")]
    SingularSystem,
    #[error("element index {0} out of range")]
    BadElement(usize),
    #[error("fields live on different meshes")]
    MeshMismatch,
    #[error("feature problem has an empty Dirichlet interface")]
    EmptyInterface,
    #[error("negative Dirichlet feature requires the plate potential")]
    MissingDirichletValue,
    #[error("CRE norm is negative ({0}); upstream integration is broken")]
    NegativeNorm(f64),
    #[error("exact QoI is zero; effectivity undefined")]
    ZeroQoi,
    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),
    #[error("feature permittivity must be positive for internal features")]
    ZeroFeaturePermittivity,
    #[error("mesh i/o: {0}")]
    MeshIo(String),
}

pub type Result<T> = std::result::Result<T, Error>;
