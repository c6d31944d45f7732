//! Volumetric classification with sparse-autoencoder pretrained convolution
//! filters.
//!
//! The pipeline: sample small patches from normalized scans, learn a sparse
//! tied-weight autoencoder on them, reuse each hidden unit's weights as a
//! frozen 3D (or per-slice 2D) convolution filter, max-pool and stack the
//! resulting feature maps, and train a sigmoid-hidden softmax classifier on
//! the stacked features with momentum SGD and validation early stopping.

pub mod autoencoder;
mod binio;
pub mod classifier;
pub mod convnet;
pub mod dataio;
pub mod error;
pub mod kernels;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Matrix, Shape3, Tensor3};
