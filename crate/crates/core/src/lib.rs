//! Physics-consistency auditing for MoCap-to-radar micro-Doppler models.
//!
//! The crate derives a BSA-weighted Doppler-centroid reference from motion
//! capture, scores model spectrograms against it (FVA), checks how the
//! predicted Doppler responds to velocity-scaling interventions (DCS and its
//! sign-reversal variant), and ships a coherent point-scatterer simulator that
//! serves as a physically consistent oracle alongside negative controls.

pub mod adapter;
pub mod audit;
pub mod error;
pub mod kinematics;
pub mod metrics;
pub mod mocap;
pub mod reference;
pub mod render;
pub mod simulator;
pub mod spectral;

pub use error::{Error, Result};
