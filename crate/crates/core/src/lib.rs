//! Estimation of population spikes, eigenvector angles, PC-score
//! correlations and score shrinkage for high-dimensional PCA when the
//! non-spiked population eigenvalues are not all equal.
//!
//! The crate is organised bottom-up:
//!
//! * [`spectrum`]: ψ, ψ′, `S_ψ`, ψ⁻¹, the sample functionals `f_F`, `g_F`
//!   and the companion Stieltjes transform.
//! * [`estimators`]: the d-, λ- and SP-method estimators.
//! * [`lsd`]: recovery of the population spectral distribution.
//! * [`spike_count`]: estimation of the number of distant spikes.
//! * [`pca`]: Gram-matrix PCA, score prediction and shrinkage adjustment.
//! * [`sim`]: simulation designs and the Monte-Carlo study harness.
//! * [`cli`]: the command-line front end.

pub mod cli;
pub mod error;
pub mod estimators;
pub mod lsd;
pub mod pca;
pub mod sim;
pub mod spectrum;
pub mod spike_count;

pub use error::{Error, Result};

/// Schema tag written into every JSON document.
pub const SCHEMA: &str = "hdspectra/1";
