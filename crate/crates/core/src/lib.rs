// Negated comparisons in argument checks are deliberate: `!(x > 0.0)`
// rejects NaN, which `x <= 0.0` would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Simulation library for a polarization-encoded BB84 link driven by an
//! incoherent light source.
//!
//! The crate is organised along the signal chain:
//!
//! - [`polarization`] — Stokes/Jones algebra, ensemble averaging, projection
//!   probabilities.
//! - [`source`] — emitter spectra, optical filtering, spectral slicing,
//!   coherence time and photon-number bookkeeping.
//! - [`encoder`] — BB84 state preparation via phase modulation and the
//!   finite-bandwidth drive waveform.
//! - [`fiber`] — birefringent-segment cascade (PMD/DGD), spectral-average
//!   depolarization, slow SOP drift and the loss budget.
//! - [`receiver`] — basis analysis, SPAD click generation with dead time and
//!   dark counts, temporal filtering, and the closed-form rate/QBER pipeline.
//! - [`protocol`] — BB84 sifting, QBER estimation and the secret-key
//!   feasibility gate.
//! - [`scenario`] / [`harness`] — end-to-end experiment configs, Monte Carlo
//!   and analytic runs, parameter sweeps, eye diagrams, polarimeter sweeps and
//!   fiber calibration.

pub mod constants;
pub mod encoder;
pub mod error;
pub mod fiber;
pub mod harness;
pub mod polarization;
pub mod protocol;
pub mod receiver;
pub mod scenario;
pub mod seed;
pub mod sim;
pub mod source;

pub use error::{Error, Result};
pub use polarization::{AnalyzerAxis, Basis, JonesVector, StokesVector};
