//! Two-grid and multigrid convergence analysis for SPD problems.
//!
//! The crate builds two-grid and multigrid hierarchies for SPD model
//! problems, measures exact convergence factors by dense eigenvalue
//! analysis, and evaluates two-sided convergence estimates for inexact
//! coarse-grid corrections, including the classical Notay and
//! Falgout–Schroder bounds and their sharpened forms.

pub mod bounds;
pub mod error;
pub mod problems;
pub mod transfer;
pub mod twogrid;
pub mod smoothers;
pub mod linalg;
pub mod mat;
pub mod multigrid;

pub use error::{Error, Result};
pub use mat::{Csr, Mat, Operator};

/// Default cap on the dimension of dense analysis objects.
pub const DEFAULT_DENSE_CAP: usize = 4096;
