//! Conditioning features and the LPC / μ-law signal path.
//!
//! A [`FeatureFrame`] is one 10 ms frame of 18 Bark-scale cepstral
//! coefficients plus pitch period and pitch correlation. The frame's
//! cepstrum is expanded into a linear-frequency power envelope, which is
//! turned into an autocorrelation and solved for a 16-tap predictor, either
//! for the full band or for one critically sampled subband.

mod lpc;
mod mulaw;
mod spectrum;

pub use lpc::{
    levinson_durbin, levinson_durbin_traced, lpc_lag_window, subband_lpc,
    subband_lpc_from_spectrum, LevinsonTrace, LpcCoeffs, SubbandLpc, LPC_ORDER,
};
pub use mulaw::{mulaw_decode, mulaw_encode, MuLawIndex, MULAW_LEVELS};
pub use spectrum::{
    cepstrum_to_spectrum, spectrum_to_autocorrelation, PowerSpectrum, BARK_ANCHORS_HZ,
    DEFAULT_FFT_SIZE,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Number of Bark-scale cepstral coefficients per frame.
pub const NB_BANDS: usize = 18;
/// Values per frame on disk: cepstrum followed by pitch period and correlation.
pub const NB_FEATURES: usize = NB_BANDS + 2;
/// Bytes per frame in a `.f32feat` file.
pub const FRAME_BYTES: usize = NB_FEATURES * 4;

/// One 10 ms conditioning frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureFrame {
    pub cepstrum: [f32; NB_BANDS],
    /// Pitch period in samples.
    pub pitch_period: f32,
    pub pitch_correlation: f32,
}

impl FeatureFrame {
    /// Builds a frame and checks its invariants.
    pub fn new(cepstrum: [f32; NB_BANDS], pitch_period: f32, pitch_correlation: f32) -> Result<Self> {
        let frame = Self { cepstrum, pitch_period, pitch_correlation };
        frame.validate().map_err(|reason| Error::Validation { location: "frame".into(), reason })?;
        Ok(frame)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if let Some(i) = self.cepstrum.iter().position(|c| !c.is_finite()) {
            return Err(format!("cepstrum[{i}] is not finite"));
        }
        if !self.pitch_period.is_finite() || !self.pitch_correlation.is_finite() {
            return Err("pitch parameters are not finite".into());
        }
        if self.pitch_period <= 0.0 {
            return Err(format!("pitch period {} must be positive", self.pitch_period));
        }
        if !(-1.0..=1.0).contains(&self.pitch_correlation) {
            return Err(format!("pitch correlation {} outside [-1, 1]", self.pitch_correlation));
        }
        Ok(())
    }

    /// The 20 raw values in on-disk order.
    pub fn to_array(&self) -> [f32; NB_FEATURES] {
        let mut out = [0.0; NB_FEATURES];
        out[..NB_BANDS].copy_from_slice(&self.cepstrum);
        out[NB_BANDS] = self.pitch_period;
        out[NB_BANDS + 1] = self.pitch_correlation;
        out
    }
}

/// Parses a headerless little-endian `.f32feat` buffer.
pub fn parse_feature_file(bytes: &[u8]) -> Result<Vec<FeatureFrame>> {
    if !bytes.len().is_multiple_of(FRAME_BYTES) {
        return Err(Error::Malformed(format!(
            "feature data length {} is not a multiple of {FRAME_BYTES} bytes",
            bytes.len()
        )));
    }
    bytes
        .chunks_exact(FRAME_BYTES)
        .enumerate()
        .map(|(index, chunk)| {
            let mut values = [0f32; NB_FEATURES];
            for (v, b) in values.iter_mut().zip(chunk.chunks_exact(4)) {
                *v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
            }
            let mut cepstrum = [0f32; NB_BANDS];
            cepstrum.copy_from_slice(&values[..NB_BANDS]);
            let frame = FeatureFrame {
                cepstrum,
                pitch_period: values[NB_BANDS],
                pitch_correlation: values[NB_BANDS + 1],
            };
            frame.validate().map_err(|reason| Error::Validation {
                location: format!("frame {index}"),
                reason,
            })?;
            Ok(frame)
        })
        .collect()
}

/// Inverse of [`parse_feature_file`].
pub fn serialize_features(frames: &[FeatureFrame]) -> Vec<u8> {
    let mut out = Vec::with_capacity(frames.len() * FRAME_BYTES);
    for frame in frames {
        for v in frame.to_array() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Deterministic, plausible-looking conditioning frames for exercising the
/// pipeline without an acoustic front end.
///
/// The cepstrum follows a slow random walk so consecutive frames are
/// correlated the way real speech features are.
pub fn synthetic_frames(count: usize, seed: u64) -> Vec<FeatureFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cepstrum = [0f32; NB_BANDS];
    for (k, c) in cepstrum.iter_mut().enumerate() {
        *c = rng.random_range(-1.0..1.0) / (1.0 + k as f32);
    }
    let mut pitch = rng.random_range(40.0..200.0f32);
    (0..count)
        .map(|_| {
            for (k, c) in cepstrum.iter_mut().enumerate() {
                let scale = 1.0 / (1.0 + k as f32);
                *c = (0.9 * *c + 0.1 * rng.random_range(-1.0..1.0) * scale).clamp(-2.0, 2.0);
            }
            pitch = (pitch + rng.random_range(-4.0..4.0f32)).clamp(32.0, 256.0);
            FeatureFrame {
                cepstrum,
                pitch_period: pitch,
                pitch_correlation: rng.random_range(-1.0..=1.0),
            }
        })
        .collect()
}
