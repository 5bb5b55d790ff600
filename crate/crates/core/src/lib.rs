//! Boundary-constrained Matérn Gaussian processes.
//!
//! Covariance kernels whose sample paths satisfy Dirichlet, Neumann or Robin
//! conditions on irregular domains, estimated by coupled Brownian-path
//! simulation, smoothed onto a B-spline finite-element basis, and used for
//! Gaussian-process prediction.

pub mod bdry_kernel;
pub mod brownian;
pub mod domain;
pub mod error;
pub mod experiments;
pub mod fem;
pub mod gp;
pub mod green_oracle;
pub mod linalg;
pub mod matern;
pub mod rng;
pub mod stats;
pub mod tensor_kernel;

pub use domain::{BoundaryPoint, Domain, DomainSpec, Point};
pub use error::{Error, Result};
pub use matern::MaternParams;
