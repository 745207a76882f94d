//! Simulation engine for a coherently driven Jaynes-Cummings oscillator whose
//! output drives an external two-level atom through a unidirectional channel.
//!
//! Layers, from the bottom up:
//! - [`params`]: physical rates and derived dimensionless drives.
//! - [`hilbert`]: the truncated composite space and its operators.
//! - [`lindblad`]: cascaded Liouvillian, stationary states, two-time
//!   correlators and numeric spectra.
//! - [`resfluor`]: closed-form resonance fluorescence results used as oracles.
//! - [`meanfield`]: semiclassical equations, adiabatic elimination and
//!   critical scaling.
//! - [`trajectories`]: quantum state diffusion and quantum-jump unravelings.

pub mod error;
pub mod experiments;
pub mod hilbert;
pub mod lindblad;
pub mod meanfield;
pub mod ode;
pub mod params;
pub mod resfluor;
pub mod noise;
pub mod sparse;
pub mod trajectories;
pub mod validation;

#[cfg(test)]
mod invariants;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
