//! Denoising-based approximate message passing (D-AMP) for compressed sensing.
//!
//! The crate is organised bottom-up: [`signal`] and [`sensing`] build problem
//! instances, [`denoise`] holds the denoiser catalogue behind the [`Denoiser`]
//! trait, [`divergence`] and [`smoothing`] supply the Onsager machinery,
//! [`recovery`] runs IST/AMP/D-IT/D-AMP, and [`state_evolution`] predicts what
//! those runs should do.

// `!(x > 0.0)` is the NaN-rejecting form used throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod denoise;
pub mod diagnostics;
pub mod divergence;
mod error;
pub mod par;
pub mod quad;
pub mod recovery;
pub mod rng;
pub mod sensing;
pub mod signal;
pub mod smoothing;
pub mod state_evolution;

pub use denoise::{Denoiser, DenoiserHandle, DenoiserKind, Tuning, TuningTable};
pub use error::{Error, Result};
pub use recovery::{Algorithm, Onsager, RecoveryConfig, RecoveryTrace};
pub use sensing::{Measurement, MeasurementMatrix};
pub use signal::{Layout, Signal, SignalClass};
