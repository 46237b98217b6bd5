//! Simulation of single-photon emission from two cascaded atom-cavity
//! subsystems restricted to the one-excitation manifold.
//!
//! Four engines evolve the same physics and cross-validate each other:
//!
//! - [`analytic`]: closed-form no-jump amplitudes (general and
//!   equal-parameter forms),
//! - [`ode`]: adaptive Runge-Kutta integration of the non-Hermitian
//!   amplitude equations with dense output,
//! - [`lindblad`]: direct density-matrix evolution of the master equation,
//! - [`trajectories`]: quantum-jump Monte Carlo with exact waiting-time
//!   sampling.
//!
//! [`observables`] computes the derived quantities (intracavity concurrence,
//! radiated probability, photon mode envelope, detector response, and the
//! two-measurement concurrence reconstruction); [`cli`] exposes everything
//! as a command-line tool emitting deterministic CSV/JSON.

pub mod analytic;
pub mod cli;
pub mod lindblad;
pub mod model;
pub mod observables;
pub mod ode;
pub mod trajectories;
