//! Multiharmonic finite element solver and functional a posteriori error
//! majorants for time-periodic eddy-current problems and the associated
//! distributed optimal-control optimality system.
//!
//! The pipeline is: [`mesh`] builds a structured tetrahedral box mesh,
//! [`edge_fem`] assembles lowest-order Nédélec matrices, [`harmonics`]
//! handles the Fourier-in-time algebra, [`systems`] builds and solves the
//! per-mode block systems with preconditioned [`minres`], and [`estimator`]
//! computes guaranteed error majorants. [`runner`] ties everything together
//! for the command-line tool.

pub mod edge_fem;
pub mod error;
pub mod estimator;
pub mod harmonics;
pub mod mesh;
pub mod minres;
pub mod presets;
pub mod quadrature;
pub mod runner;
pub mod sparse;
pub mod systems;

pub use error::{Error, Result};
