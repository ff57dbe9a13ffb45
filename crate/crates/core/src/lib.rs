//! Optimal control of one-dimensional Bose-Einstein condensates.
//!
//! The crate simulates mean-field condensate dynamics (a cubic nonlinear
//! Schroedinger equation) under a time-dependent confinement potential
//! `V(x, lambda(t))` and searches for control trajectories `lambda(t)`
//! that steer the terminal state towards a target. Two optimizer
//! families are provided: concurrent gradient schemes (conjugate
//! gradient or BFGS, with the search direction taken in either the L2 or
//! the H1 norm) and a sequential monotonic scheme with explicit or
//! Newton-refined updates. A benchmark harness runs the bundled
//! splitting and shaking problems, counts PDE solves as the
//! algorithm-agnostic effort metric and exports traces for plotting.
//!
//! Units: hbar = 1, time in milliseconds, length in micrometers.

pub mod config;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod fft;
pub mod functional;
pub mod gradient;
pub mod grape;
pub mod grid;
pub mod harness;
pub mod krotov;
pub mod potential;
pub mod problem;
pub mod spectrum;
pub mod stationary;
pub mod trace;
pub mod wavefunction;

pub use control::ControlField;
pub use error::{HarnessError, ModelError};
pub use grid::{SpatialGrid, TimeGrid};
pub use potential::PotentialFamily;
pub use wavefunction::{fidelity_overlap, inner_product, FieldRole, PhysicalParams, WaveFunction};
