//! On-device learning (ODL) for streaming vibration anomaly detection.
//!
//! The crate is organised around the data path of a battery-powered sensor
//! node:
//!
//! * [`preprocess`] turns raw acceleration windows into magnitude spectra.
//! * [`oselm`] holds a single OS-ELM autoencoder and its batch-size-1
//!   recursive update.
//! * [`ensemble`] combines several autoencoders sharing one hidden
//!   projection, routes samples by minimum reconstruction loss and performs
//!   the initial sequential k-means clustering.
//! * [`baseline`] provides the prediction-only comparators (backprop MLPs and
//!   a frozen OS-ELM ensemble).
//! * [`datasets`], [`metrics`] and [`eval`] build and score the evaluation
//!   tasks.
//! * [`energymodel`] is the analytical time/energy model of the node.
//! * [`cli`] implements the `odl` command line tool.
//!
//! Data-parallel loops (batch scoring, preprocessing of many windows,
//! per-instance training and scenario sweeps) run on rayon when the
//! `parallel` feature is enabled and fall back to plain iterators otherwise.

pub mod baseline;
pub mod checkpoint;
pub mod cli;
pub mod datasets;
pub mod energymodel;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod exec;
pub mod linalg;
pub mod metrics;
pub mod oselm;
pub mod preprocess;
pub mod record;
pub mod scalar;

pub use error::{OdlError, Result};
pub use exec::Exec;
pub use scalar::Real;
