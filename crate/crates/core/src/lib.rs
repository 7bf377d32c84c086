//! Inference engine for a multi-band multi-time LPCNet vocoder.
//!
//! The crate is organised bottom-up:
//!
//! * [`features`] turns Bark-cepstrum conditioning frames into per-subband
//!   LPC predictors and hosts the 8-bit μ-law excitation codec.
//! * [`filterbank`] designs a cosine-modulated Pseudo-QMF bank and runs
//!   critically sampled analysis/synthesis.
//! * [`neuralops`] holds the small set of kernels the sample-rate network
//!   needs: dense and 16×1 block-sparse GEMV, GRU cell, dual FC head,
//!   embedding lookups and categorical sampling.
//! * [`vocoder`] wires these into the frame-rate network and the two
//!   sample-rate loops (single-band baseline and multi-band multi-time).
//! * [`attention`] contains forward computations for location-sensitive,
//!   forward and GMM attention plus the multi-guidance losses.
//! * [`perf`] evaluates the analytic complexity model and times synthesis.
//! * [`io`] reads and writes the `MMLP` weights container, `.f32feat`
//!   feature files and PCM WAV output.

pub mod attention;
pub mod error;
pub mod features;
pub mod filterbank;
pub mod io;
pub mod neuralops;
pub mod perf;
pub mod vocoder;

pub use error::{Error, Result};

/// Output sample rate in Hz.
pub const SAMPLE_RATE: u32 = 16_000;
/// Samples per 10 ms conditioning frame.
pub const FRAME_SIZE: usize = 160;
