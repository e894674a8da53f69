//! Two-dimensional extended Boussinesq wave solver.
//!
//! Spatial discretisation is hybrid: shallow-water fluxes use a
//! well-balanced central-upwind finite-volume scheme and the dispersive
//! terms use central finite differences. Time integration is a
//! variable-step third-order Adams-Bashforth predictor with CFL-driven step
//! control, and the momentum fluxes are recovered from the integrated
//! variables by tridiagonal solves along grid lines.

pub mod asc;
pub mod boundary;
pub mod dispersion;
pub mod error;
pub mod grid;
pub mod hydro;
pub mod implicit;
pub mod multistep;
pub mod scenario;
pub mod stepper;

pub use error::{Error, Result};
pub use grid::{Bathymetry, Field2, FieldState, Grid, PhysParams, GHOST};
