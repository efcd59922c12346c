//! Reconstruction of network interaction topology from power-spectral data
//! when the driving noise is spatially correlated.
//!
//! The library models networks of linear dynamic interactions driven by
//! correlated noise, rewrites the correlations as latent strict-parent nodes
//! (one per maximal clique of the correlation graph, with a monomial lifting
//! for polynomial correlations), and recovers the interaction topology by
//! splitting the imaginary part of the inverse power spectral density matrix
//! into sparse and low-rank skew-symmetric components.

pub mod decomp;
pub mod error;
pub mod generator;
pub mod latent_transform;
pub mod model_io;
pub mod netmodel;
pub mod poly_lift;
pub mod reconstruct;
pub mod spectral_est;
pub mod verify;

pub use error::{Error, Result};
