//! Discrete Hilbert transforms, classical and learned, with a Kramers-Kronig
//! retrieval pipeline for CARS spectra and a benchmark harness.
//!
//! Module map:
//! * [`dht`] centered DFT conventions, Marple and Henrici transforms, padding baseline
//! * [`lineshapes`] analytic peaks, their Hilbert partners, quadrature oracle
//! * [`synth`] seeded corpus generation and augmentation
//! * [`learn`] least-squares fitting and application of the learned matrix
//! * [`eval`] error metrics and method comparison reports
//! * [`kk`] Raman extraction and the window-truncation sweep
//! * [`io`] binary container and CSV interchange

pub mod config;
pub mod dht;
pub mod error;
pub mod eval;
pub mod io;
pub mod kk;
pub mod learn;
pub mod lineshapes;
pub mod matrix;
pub mod props;
pub mod synth;

pub use error::{Error, Result};
pub use matrix::Matrix;
