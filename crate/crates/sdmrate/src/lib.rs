//! Space-division-multiplexed fiber transmission toolkit.
//!
//! The crate simulates nonlinear propagation over coupled spatial modes with
//! the split-step Fourier method, derives the correlated
//! rotation-and-additive-noise (CRAN) mismatched channel model from the
//! regular-perturbation coefficient calculus, fits the model parameters from
//! training data, and evaluates mismatched achievable rates with particle
//! filtering for four receiver algorithms of increasing joint-processing
//! complexity.
//!
//! Layering, bottom to top:
//!
//! * [`signal`] — sampled complex fields, unitary spectra, unit conversions;
//! * [`rng`] — hierarchical counter-based random streams;
//! * [`fiber`] — weak/strong-coupling split-step propagation;
//! * [`wdm`] — WDM transmitter and the LDC/DBP receiver chain;
//! * [`rp`] — regular-perturbation coefficients and J-matrix statistics;
//! * [`cran`] — the hidden Gauss-Markov rotation model;
//! * [`estimation`] — parameter fits from training data;
//! * [`pf`] — sequential Monte-Carlo entropy and rate evaluation;
//! * [`experiment`] — end-to-end orchestration and CSV/JSON emission.

pub mod cran;
pub mod error;
pub mod estimation;
pub mod experiment;
pub mod fft;
pub mod fiber;
pub mod pf;
pub mod rng;
pub mod rp;
pub mod signal;
pub mod wdm;

pub use error::{Error, Result};
