//! Design and analysis toolkit for individual addressing of trapped ions with
//! on-chip magnetic field gradients.
//!
//! The crate is organised along the physics pipeline:
//!
//! * [`magnetostatics`]: Biot-Savart fields and field gradients of
//!   piecewise-linear current paths, plus the line-oriented geometry format.
//! * [`ionchain`]: equilibrium positions of a linear ion crystal in a
//!   harmonic axial well.
//! * [`addressing`]: Zeeman splittings, gradient requirements and crosstalk.
//! * [`spectra`]: synthetic scan/flop datasets and least-squares fitting.
//! * [`coherence`]: Ramsey and spin-echo Monte Carlo under detuning noise.
//! * [`optimizer`]: the parameterised S-shaped gradient geometry and a
//!   Nelder-Mead design search.
//! * [`report`]: the end-to-end reproduction table used by the CLI.
//!
//! Interface units are micrometres, milliamps, gauss, gauss/mm, kHz, µs/ms and
//! milliwatts; each function documents which one it expects.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod addressing;
pub mod coherence;
pub mod constants;
pub mod error;
pub mod ionchain;
pub mod magnetostatics;
pub mod optimizer;
pub mod report;
pub mod rng;
pub mod spectra;

pub use error::{Error, Result};

/// Default seed used by every stochastic routine when the caller does not
/// provide one.
pub const DEFAULT_SEED: u64 = 20_090_301;
