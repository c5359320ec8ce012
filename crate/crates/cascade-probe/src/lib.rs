//! Physical-scale analysis of decaying two-dimensional turbulence.
//!
//! The crate evolves the periodic 2D Navier-Stokes equations, builds smooth
//! space-time cutoff functions and optimal coverings of an analysis disk,
//! computes localized energy and enstrophy fluxes with their ensemble averages,
//! and evaluates the cascade and locality bounds on the computed data.

pub mod coverings;
pub mod cascade_verdicts;
pub mod cli;
pub mod cutoffs;
pub mod error;
pub mod flux_analysis;
pub mod nse_solver;
pub mod spectral_field;

pub use error::{Error, Result};
