//! Experiment workflow on top of `voxelnet`: dataset synthesis, autoencoder
//! pretraining, featurization, classifier training and evaluation.

pub mod commands;
pub mod config;

pub use config::RunConfig;
