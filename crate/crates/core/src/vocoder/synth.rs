use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::frn::frn_forward;
use super::srn::{srn_step_baseline, srn_step_mmt, FrameConditioning, NoProbe, StreamState, SynthesisProbe};
use super::weights::{ModelWeights, Mode};
use crate::error::{Error, Result};
use crate::features::{cepstrum_to_spectrum, subband_lpc_from_spectrum, FeatureFrame, LpcCoeffs, DEFAULT_FFT_SIZE};
use crate::filterbank::{synthesis, PrototypeFilterBank, SubbandSignals};
use crate::FRAME_SIZE;

/// LPC coefficients of every band of one frame; one band gives the full-band predictor.
pub fn frame_lpc(frame: &FeatureFrame, bands: usize) -> Result<Vec<LpcCoeffs>> {
    let spectrum = cepstrum_to_spectrum(frame, DEFAULT_FFT_SIZE)?;
    (0..bands).map(|b| subband_lpc_from_spectrum(&spectrum, b, bands).map(|s| s.coeffs)).collect()
}

/// Renders `160 × frames.len()` samples at 16 kHz.
pub fn synthesize(
    frames: &[FeatureFrame],
    w: &ModelWeights,
    mode: Mode,
    fb: &PrototypeFilterBank,
    temperature: f32,
    seed: u64,
) -> Result<Vec<f64>> {
    synthesize_with_probe(frames, w, mode, fb, temperature, seed, &mut NoProbe)
}

/// [`synthesize`] with an observation probe attached to the sample loop.
pub fn synthesize_with_probe<P: SynthesisProbe + ?Sized>(
    frames: &[FeatureFrame],
    w: &ModelWeights,
    mode: Mode,
    fb: &PrototypeFilterBank,
    temperature: f32,
    seed: u64,
    probe: &mut P,
) -> Result<Vec<f64>> {
    if w.mode() != mode {
        return Err(Error::param(format!("requested {mode} synthesis with {} weights", w.mode())));
    }
    let cfg = *w.config();
    if mode == Mode::Mmt && fb.bands() != cfg.bands {
        return Err(Error::param(format!(
            "filter bank has {} bands but the model has {}",
            fb.bands(),
            cfg.bands
        )));
    }
    let conds = frn_forward(frames, w)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = StreamState::new(w);
    let steps = cfg.steps_per_frame();

    if mode == Mode::Baseline {
        let mut out = Vec::with_capacity(FRAME_SIZE * frames.len());
        for (frame, cond) in frames.iter().zip(&conds) {
            let lpc = frame_lpc(frame, 1)?;
            let fc = FrameConditioning::new(cond, w)?;
            for _ in 0..steps {
                out.push(srn_step_baseline(&mut state, &fc, w, &lpc[0], temperature, &mut rng, probe)?);
            }
        }
        return Ok(out);
    }

    let nb = cfg.bands;
    let band_len = FRAME_SIZE * frames.len() / nb;
    let delay = fb.group_delay();
    let pad = delay.div_ceil(nb);
    let mut streams = vec![Vec::with_capacity(band_len + pad); nb];
    for (frame, cond) in frames.iter().zip(&conds) {
        let lpc = frame_lpc(frame, nb)?;
        let fc = FrameConditioning::new(cond, w)?;
        for _ in 0..steps {
            let samples = srn_step_mmt(&mut state, &fc, w, &lpc, temperature, &mut rng, probe)?;
            for time in samples.chunks_exact(nb) {
                for (stream, &s) in streams.iter_mut().zip(time) {
                    stream.push(s);
                }
            }
        }
    }
    for stream in &mut streams {
        stream.resize(band_len + pad, 0.0);
    }
    let full = synthesis(&SubbandSignals::new(streams)?, fb)?;
    Ok(full[delay..delay + FRAME_SIZE * frames.len()].to_vec())
}
