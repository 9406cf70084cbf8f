//! Nonlocal and local degenerate Cahn-Hilliard and cell-adhesion solvers on
//! the periodic torus, with the diagnostics used to compare them.

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod kernels;
pub mod nonlocal_ops;
pub mod physics;
pub mod quadrature;
pub mod snapshot;
pub mod solvers;
pub mod sweep;

pub use error::{Error, Result};
pub use grid::{LaplacianScheme, TorusField, TorusGrid};
pub use kernels::{build_kernel, KernelSpec, MollifierProfile, ProfileKind};
pub use physics::{MobilitySpec, PotentialSpec};
