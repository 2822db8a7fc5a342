//! Temporal variational autoencoder (TeVAE) for discrete online anomaly
//! detection in multivariate time series.
//!
//! The crate covers the whole offline pipeline:
//!
//! - [`preprocess`]: resampling, z-score normalisation, window sizing from
//!   autocorrelation, and windowing.
//! - [`model`]: the BiLSTM encoder/decoder with a multi-head attention bridge
//!   whose queries and keys come from the input window and whose values come
//!   from the latent matrix, plus the attention-free ablation.
//! - [`train`]: denoising training with cyclic KL annealing, AMSGrad and
//!   early stopping on validation NLL.
//! - [`detect`]: shift-1 scoring with first/last/mean reverse-windowing,
//!   max-NLL thresholding and root-cause attribution.
//! - [`metrics`]: sequence-level confusion counting, PR curves, detection
//!   delay and root-cause precision.
//! - [`syndata`]: a 13-channel drive-cycle simulator with anomaly injectors.
//! - [`dataset`]: the on-disk dataset directory format.

pub mod dataset;
pub mod detect;
pub mod error;
pub mod metrics;
pub mod model;
pub mod preprocess;
pub mod rng;
pub mod syndata;
pub mod train;

pub use error::{Error, Result};
