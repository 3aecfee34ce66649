//! Solvers for distributed optimal control of incompressible flow.
//!
//! The crate assembles Q2-Q1 finite element discretizations of velocity
//! tracking problems constrained by the stationary or instationary
//! (Navier-)Stokes equations, linearizes with a Picard/Oseen iteration, and
//! solves each step's saddle-point system with flexible GMRES and
//! block-triangular preconditioners built from Chebyshev semi-iteration,
//! geometric multigrid, and pressure-space commutator approximations of the
//! Schur complement.

pub mod chebyshev;
pub mod config;
pub mod dense;
pub mod error;
pub mod fem;
pub mod grid;
pub mod krylov;
pub mod multigrid;
pub mod problems;
pub mod report;
pub mod space;
pub mod sparse;
pub mod stationary;
pub mod transient_be;
pub mod transient_cn;
pub mod vtk;

pub use error::{FlowError, Result};
