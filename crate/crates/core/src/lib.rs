//! Simulation and analysis of squeezed-light distillation: two-photon
//! subtraction, two-copy Gaussification (exact and emulated on phase-space
//! samples), maximum-likelihood tomography from eight-port homodyne data, and
//! temporal-mode extraction.
//!
//! Quadratures are `X = a + a†`, `Y = -i(a - a†)`, with vacuum variance 1.
//! Squeezing in dB is `-10 log10(var_y)`.

pub mod analytic;
pub mod error;
pub mod fock;
pub mod gaussification;
pub mod pipeline;
pub mod sampling;
pub mod temporal;
pub mod tomography;
pub mod util;
pub mod validate;

pub use error::{Error, Result};
