//! Optimal design with nonlocal state equations.
//!
//! This crate implements piecewise-constant optimal design problems whose
//! state equation is either a fractional (nonlocal) conductivity or
//! bond-based peridynamic operator with interaction horizon `R`, together
//! with their local limits. It provides:
//!
//! * simplicial meshes of intervals and disks, extended by a horizon layer
//!   ([`mesh`]);
//! * Gauss rules on simplices and singularity-removing product rules for
//!   element pairs with power-law kernels ([`quad`]);
//! * assembly of the four bilinear forms, load vectors, seminorms and
//!   per-element coefficient gradients ([`forms`]);
//! * sparse symmetric linear algebra and the design-to-state solver
//!   ([`linalg`], [`solver`]);
//! * projected gradient descent on the reduced cost ([`optimizer`]);
//! * an experiment harness for table rows and convergence studies
//!   ([`experiments`]);
//! * slow, independent reference computations used to validate the fast
//!   paths ([`oracle`]).
//!
//! The `nldesign` binary exposes the harness on the command line.

pub mod assembly;
pub mod error;
pub mod experiments;
pub mod forms;
pub mod linalg;
pub mod mesh;
pub mod optimizer;
pub mod oracle;
pub mod quad;
pub mod solver;

pub use error::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
