//! Toolkit for EEG-based Parkinson's disease detection.
//!
//! The pipeline runs in this order:
//!
//! 1. [`dataio`] loads recordings, re-references, band-passes, epochs and
//!    z-scores them.
//! 2. [`augment`] trains one Wasserstein GAN per group (HC, PD) and fuses
//!    generated epochs with the real ones at a chosen ratio.
//! 3. [`pruning`] compares per-channel amplitude distributions of real and
//!    generated data with Jensen–Shannon divergence and keeps the channels
//!    that separate the groups while staying faithful to the real data.
//! 4. [`quality`] scores generated epochs with a recurrent autoencoder.
//! 5. [`classifier`] trains and evaluates the compact convolutional network.
//! 6. [`harness`] wires the stages into single- and cross-dataset
//!    experiments, ablations and ratio sweeps.

pub mod augment;
pub mod autograd;
pub mod checkpoint;
pub mod classifier;
pub mod dataio;
pub mod error;
pub mod harness;
pub mod nn;
pub mod plot;
pub mod pruning;
pub mod quality;
pub mod rng;

pub use error::{Error, Result};
