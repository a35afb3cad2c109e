//! Continuation and bifurcation analysis for bound states of the
//! one-dimensional nonlinear Schrödinger equation
//! `i u_t = (-Δ + V) u + γ|u|^p u`.

pub mod asymptotics;
pub mod bifurcation;
pub mod cli;
pub mod config;
pub mod continuation;
pub mod driver;
pub mod error;
pub mod evolution;
pub mod grid;
pub mod linalg;
pub mod model;
pub mod solver;
pub mod spectral;
pub mod stability;
pub mod suites;
pub mod variational;

pub use error::{Error, Result};
pub use grid::Grid;
