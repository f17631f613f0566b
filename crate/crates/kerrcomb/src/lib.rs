//! Kerr optical frequency combs: semi-classical stationary states and the
//! quantum-noise spectra of the light they emit.
//!
//! Modules follow the physics pipeline: [`units`] turns a resonator
//! description into rates, [`steady_state`] finds the intracavity field,
//! [`spontaneous`] covers below-threshold pair emission, [`linearization`]
//! and [`squeezing`] handle fluctuations above threshold, and
//! [`hamiltonian_audit`] checks the operator bookkeeping symbolically.

pub mod hamiltonian_audit;
pub mod linearization;
pub mod series;
pub mod spontaneous;
pub mod squeezing;
pub mod steady_state;
pub mod units;

mod spectral;

pub use num_complex::Complex64;
