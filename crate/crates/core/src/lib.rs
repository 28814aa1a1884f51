//! Desk-scale piano transcription with a reconstruction-regularized dual
//! U-net.
//!
//! The crate turns 16 kHz audio into 88-pitch piano rolls and note lists. A
//! spectrogram frontend (log mel or constant-Q) feeds a U-net + BiLSTM stack
//! that emits a posteriorgram; a second BiLSTM + U-net reconstructs the
//! input spectrogram from that posteriorgram, and the transcriber is applied
//! once more to the reconstruction. Training minimizes the L2 reconstruction
//! error plus binary cross-entropy on both posteriorgrams, which regularizes
//! the transcriber toward predictions that still contain enough information
//! to rebuild the input.
//!
//! Everything numeric is written in-crate on a small tensor type so that the
//! whole pipeline — convolutions, LSTMs, losses, optimizer — can be verified
//! end to end with finite-difference gradient checks. The `examples/`
//! directory exercises each capability; the `rollscribe` binary wraps the
//! same entry points in a CLI.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod dsp;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod synth;
pub mod trainer;

pub use config::Config;
pub use error::{Error, Result};
