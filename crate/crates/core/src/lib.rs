//! Time-domain target speaker extraction toolkit.
//!
//! Jointly trained speaker embedder + separator with two conformer-based
//! separator architectures (Conformer-FFN, TCN-Conformer) and a TCN
//! baseline, plus mixture simulation, multi-task training, and SI-SDR
//! evaluation.

pub mod autodiff;
pub mod config;
pub mod embedder;
pub mod error;
pub mod frontend;
pub mod model;
pub mod nn;
pub mod objectives;
pub mod separator;
pub mod signal;
pub mod training;

pub use config::{Architecture, MixtureType, RunConfig};
pub use error::{Result, TseError};
pub use signal::Waveform;
