use rand::RngCore;

use super::frn::ConditionVector;
use super::weights::{ModelWeights, Mode};
use crate::error::{Error, Result};
use crate::features::{mulaw_decode, mulaw_encode, LpcCoeffs, MuLawIndex, LPC_ORDER, MULAW_LEVELS};
use crate::neuralops::{dual_fc_into, gru_update, sample_index, vectorized};

/// `Σ_{k=1..16} a_k · s_{t−k}`, with `queue[15]` holding `s_{t−1}`.
#[inline]
pub fn lpc_predict(queue: &[f64; LPC_ORDER], coeffs: &LpcCoeffs) -> f64 {
    coeffs.coeffs().iter().zip(queue.iter().rev()).map(|(a, s)| a * s).sum()
}

/// Condition vector projected onto the GRU-A and GRU-B gate inputs.
/// Computed once per frame and reused by every step of that frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameConditioning {
    gru_a: Vec<f32>,
    gru_b: Vec<f32>,
}

impl FrameConditioning {
    pub fn new(cond: &ConditionVector, w: &ModelWeights) -> Result<Self> {
        if cond.as_slice().len() != w.cond_a.cols() {
            return Err(Error::param(format!(
                "condition vector has {} values, expected {}",
                cond.as_slice().len(),
                w.cond_a.cols()
            )));
        }
        let mut gru_a = vec![0.0; w.cond_a.rows()];
        let mut gru_b = vec![0.0; w.cond_b.rows()];
        vectorized(#[inline(always)] || {
            w.cond_a.gemv_acc(cond.as_slice(), &mut gru_a);
            w.cond_b.gemv_acc(cond.as_slice(), &mut gru_b);
        });
        Ok(Self { gru_a, gru_b })
    }
}

/// Internals of one emitted subband sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRecord {
    pub band: usize,
    /// Position of the sample within its band stream.
    pub index: u64,
    pub excitation: MuLawIndex,
    pub excitation_value: f64,
    pub prediction: f64,
    pub sample: f64,
}

/// Observation hooks for the sample-rate loop. Every method defaults to a no-op.
pub trait SynthesisProbe {
    /// Called once per SRN forward pass.
    fn on_forward(&mut self) {}

    /// Replaces the sampled excitation of `band` at stream position `index`.
    /// Sampling still happens, so the RNG sequence is unaffected.
    fn excitation_override(&mut self, _band: usize, _index: u64) -> Option<MuLawIndex> {
        None
    }

    fn on_sample(&mut self, _record: &SampleRecord) {}
}

/// Probe that observes nothing.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoProbe;

impl SynthesisProbe for NoProbe {}

/// Counts SRN forward passes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepCounter {
    pub forward_passes: u64,
}

impl SynthesisProbe for StepCounter {
    fn on_forward(&mut self) {
        self.forward_passes += 1;
    }
}

/// Recurrent state of one synthesis stream. Histories start at zero.
#[derive(Debug, Clone, Default)]
pub struct StreamState {
    bands: usize,
    time_span: usize,
    gru_a: Vec<f32>,
    gru_b: Vec<f32>,
    queues: Vec<[f64; LPC_ORDER]>,
    /// `[e_{t−1}, e_{t−2}]` per band.
    exc_hist: Vec<[MuLawIndex; 2]>,
    /// `[s_{t−1}, s_{t−2}]` per band.
    sig_hist: Vec<[f64; 2]>,
    /// `p_{t−1}` per band.
    pred_last: Vec<f64>,
    /// Samples emitted per band.
    emitted: u64,
    steps: u64,
    steps_per_frame: u64,
    // Scratch, sized once.
    pred_now: Vec<f64>,
    input_a: Vec<f32>,
    scratch_a: Vec<f32>,
    picks: Vec<(usize, MuLawIndex)>,
    input_b: Vec<f32>,
    scratch_b: Vec<f32>,
    logits: Vec<f32>,
    fc_scratch: Vec<f32>,
    codes: Vec<MuLawIndex>,
    output: Vec<f64>,
}

impl StreamState {
    pub fn new(w: &ModelWeights) -> Self {
        let c = w.config();
        let (nb, ga, gb) = (c.bands, c.gru_a, c.gru_b);
        Self {
            bands: nb,
            time_span: c.time_span,
            gru_a: vec![0.0; ga],
            gru_b: vec![0.0; gb],
            queues: vec![[0.0; LPC_ORDER]; nb],
            exc_hist: vec![[MuLawIndex::ZERO; 2]; nb],
            sig_hist: vec![[0.0; 2]; nb],
            pred_last: vec![0.0; nb],
            emitted: 0,
            steps: 0,
            steps_per_frame: c.steps_per_frame() as u64,
            pred_now: vec![0.0; nb],
            input_a: vec![0.0; 3 * ga],
            scratch_a: vec![0.0; 3 * ga],
            picks: Vec::with_capacity(6 * nb),
            input_b: vec![0.0; 3 * gb],
            scratch_b: vec![0.0; 3 * gb],
            logits: vec![0.0; MULAW_LEVELS],
            fc_scratch: vec![0.0; 2 * MULAW_LEVELS],
            codes: vec![MuLawIndex::ZERO; c.heads()],
            output: vec![0.0; c.heads()],
        }
    }

    pub fn is_initialized(&self) -> bool {
        self.bands > 0
    }

    pub fn gru_a_state(&self) -> &[f32] {
        &self.gru_a
    }

    pub fn gru_b_state(&self) -> &[f32] {
        &self.gru_b
    }

    /// The 16 most recent samples of `band`, newest last.
    pub fn queue(&self, band: usize) -> &[f64; LPC_ORDER] {
        &self.queues[band]
    }

    pub fn excitation_history(&self, band: usize) -> [MuLawIndex; 2] {
        self.exc_hist[band]
    }

    pub fn sample_history(&self, band: usize) -> [f64; 2] {
        self.sig_hist[band]
    }

    pub fn last_prediction(&self, band: usize) -> f64 {
        self.pred_last[band]
    }

    /// Samples emitted so far in each band.
    pub fn samples_emitted(&self) -> u64 {
        self.emitted
    }

    pub fn frame_cursor(&self) -> u64 {
        self.steps / self.steps_per_frame.max(1)
    }

    pub fn step_in_frame(&self) -> u64 {
        self.steps % self.steps_per_frame.max(1)
    }

    fn check(&self, w: &ModelWeights, mode: Mode, lpc: &[LpcCoeffs], cond: &FrameConditioning) -> Result<()> {
        if !self.is_initialized() {
            return Err(Error::State("stream state is not initialized".into()));
        }
        if w.mode() != mode {
            return Err(Error::param(format!("{} weights cannot drive a {mode} step", w.mode())));
        }
        let c = w.config();
        if self.bands != c.bands || self.time_span != c.time_span || self.gru_a.len() != c.gru_a {
            return Err(Error::State("stream state was built for different weights".into()));
        }
        if lpc.len() != c.bands {
            return Err(Error::param(format!("need LPC coefficients for {} bands, got {}", c.bands, lpc.len())));
        }
        if let Some(bad) = lpc.iter().find(|l| l.order() != LPC_ORDER) {
            return Err(Error::param(format!("LPC order must be {LPC_ORDER}, got {}", bad.order())));
        }
        if cond.gru_a.len() != self.input_a.len() || cond.gru_b.len() != self.input_b.len() {
            return Err(Error::param("frame conditioning was built for different weights"));
        }
        Ok(())
    }
}

#[inline]
fn push(queue: &mut [f64; LPC_ORDER], sample: f64) {
    queue.copy_within(1.., 0);
    queue[LPC_ORDER - 1] = sample;
}

/// One forward pass emitting `bands × time_span` samples, time-major.
fn step<R, P>(
    s: &mut StreamState,
    w: &ModelWeights,
    cond: &FrameConditioning,
    lpc: &[LpcCoeffs],
    temperature: f32,
    rng: &mut R,
    probe: &mut P,
) -> Result<()>
where
    R: RngCore + ?Sized,
    P: SynthesisProbe + ?Sized,
{
    vectorized(#[inline(always)] || step_body(s, w, cond, lpc, temperature, rng, probe))
}

#[inline(always)]
fn step_body<R, P>(
    s: &mut StreamState,
    w: &ModelWeights,
    cond: &FrameConditioning,
    lpc: &[LpcCoeffs],
    temperature: f32,
    rng: &mut R,
    probe: &mut P,
) -> Result<()>
where
    R: RngCore + ?Sized,
    P: SynthesisProbe + ?Sized,
{
    if !(temperature >= 0.0) || !temperature.is_finite() {
        return Err(Error::param(format!("temperature {temperature} must be finite and nonnegative")));
    }
    let (nb, nt) = (s.bands, s.time_span);
    probe.on_forward();

    for b in 0..nb {
        s.pred_now[b] = lpc_predict(&s.queues[b], &lpc[b]);
    }
    s.input_a.copy_from_slice(&cond.gru_a);
    s.picks.clear();
    for (b, slots) in w.role_slots.iter().enumerate() {
        let [e1, e2] = s.exc_hist[b];
        let [s1, s2] = s.sig_hist[b];
        let codes = [e1, e2, mulaw_encode(s1), mulaw_encode(s2), mulaw_encode(s.pred_last[b]), mulaw_encode(s.pred_now[b])];
        for (slot, code) in slots.iter().zip(codes) {
            if let Some(role) = *slot {
                s.picks.push((role, code));
            }
        }
    }
    w.embeddings.accumulate_rows(&s.picks, &mut s.input_a);
    gru_update(&mut s.gru_a, &s.input_a, &w.gru_a, &mut s.scratch_a);
    s.input_b.copy_from_slice(&cond.gru_b);
    w.gru_b_input.gemv_acc(&s.gru_a, &mut s.input_b);
    gru_update(&mut s.gru_b, &s.input_b, &w.gru_b, &mut s.scratch_b);

    for (h, head) in w.heads.iter().enumerate() {
        dual_fc_into(&s.gru_b, head, &mut s.logits, &mut s.fc_scratch);
        if s.logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::numeric(format!("non-finite logit from head {h}")));
        }
        let sampled = MuLawIndex::new(sample_index(&s.logits, temperature, rng)).expect("index below 256");
        let (j, b) = (h / nb, h % nb);
        s.codes[h] = probe.excitation_override(b, s.emitted + j as u64).unwrap_or(sampled);
    }

    for j in 0..nt {
        for b in 0..nb {
            let h = j * nb + b;
            let prediction = if j == 0 { s.pred_now[b] } else { lpc_predict(&s.queues[b], &lpc[b]) };
            let excitation = s.codes[h];
            let excitation_value = mulaw_decode(excitation);
            let sample = excitation_value + prediction;
            push(&mut s.queues[b], sample);
            s.exc_hist[b] = [excitation, s.exc_hist[b][0]];
            s.sig_hist[b] = [sample, s.sig_hist[b][0]];
            s.pred_last[b] = prediction;
            s.output[h] = sample;
            probe.on_sample(&SampleRecord {
                band: b,
                index: s.emitted + j as u64,
                excitation,
                excitation_value,
                prediction,
                sample,
            });
        }
    }
    s.emitted += nt as u64;
    s.steps += 1;
    Ok(())
}

/// Multi-band multi-time step. Returns the `bands × time_span` new
/// samples time-major: `[s_t^{b0..}, s_{t+1}^{b0..}]`.
pub fn srn_step_mmt<'s, R, P>(
    state: &'s mut StreamState,
    cond: &FrameConditioning,
    w: &ModelWeights,
    lpc: &[LpcCoeffs],
    temperature: f32,
    rng: &mut R,
    probe: &mut P,
) -> Result<&'s [f64]>
where
    R: RngCore + ?Sized,
    P: SynthesisProbe + ?Sized,
{
    state.check(w, Mode::Mmt, lpc, cond)?;
    step(state, w, cond, lpc, temperature, rng, probe)?;
    Ok(&state.output)
}

/// Plain LPCNet step emitting one full-band sample.
pub fn srn_step_baseline<R, P>(
    state: &mut StreamState,
    cond: &FrameConditioning,
    w: &ModelWeights,
    lpc: &LpcCoeffs,
    temperature: f32,
    rng: &mut R,
    probe: &mut P,
) -> Result<f64>
where
    R: RngCore + ?Sized,
    P: SynthesisProbe + ?Sized,
{
    let lpc = std::slice::from_ref(lpc);
    state.check(w, Mode::Baseline, lpc, cond)?;
    step(state, w, cond, lpc, temperature, rng, probe)?;
    Ok(state.output[0])
}
