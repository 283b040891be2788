//! Truncated Fock-space states, channels, moments and phase-space functions.

mod beamsplitter;
mod channel;
mod moments;
mod state;
mod wigner;

pub use beamsplitter::{beamsplitter_interfere, project_and_trace, project_mode, BeamSplitter, Mode, TwoModeDensity};
pub use channel::loss_channel;
pub use moments::{moments, CovMat2, QuadratureMoments, SYMPLECTIC_FORM};
pub(crate) use moments::operator_covariance;
pub use state::{DensityMatrix, DensityMatrixJson, FockVector, TAIL_TOLERANCE};
pub(crate) use state::coherent_amplitudes;
pub use wigner::{displacement_elements, wigner, wigner_point, Grid, GridStatus, WignerField};

/// Default cutoff for simulation.
pub const DEFAULT_CUTOFF: usize = 40;
/// Cutoff used for tomographic reconstruction.
pub const TOMOGRAPHY_CUTOFF: usize = 21;
