//! Analytic complexity model and wall-clock benchmarking of both loops.

use std::fmt::Write as _;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::features::{synthetic_frames, FeatureFrame};
use crate::filterbank::PrototypeFilterBank;
use crate::vocoder::{synthesize_with_probe, ModelWeights, Mode, NoProbe, StepCounter};
use crate::{FRAME_SIZE, SAMPLE_RATE};

/// Published complexity of the single-band configuration, in GFLOPS.
pub const REFERENCE_GFLOPS_BASELINE: f64 = 2.8;
/// Published complexity of the 4-band 2-time configuration, in GFLOPS.
pub const REFERENCE_GFLOPS_MMT: f64 = 1.0;
/// Shortest benchmark accepted, in frames (one second of audio).
pub const MIN_BENCH_FRAMES: usize = 100;
/// Timed repetitions; the median is reported.
pub const BENCH_REPEATS: usize = 3;

/// Inputs of the complexity model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexityParams {
    /// Fraction of GRU-A recurrent weights kept.
    pub density: f64,
    pub gru_a: f64,
    pub gru_b: f64,
    pub levels: f64,
    pub bands: f64,
    pub time_span: f64,
    pub sample_rate: f64,
}

impl ComplexityParams {
    /// d = 0.1, G_A = 384, G_B = 16, Q = 256, F_s = 16 kHz.
    pub fn with_split(bands: usize, time_span: usize) -> Self {
        Self {
            density: 0.1,
            gru_a: 384.0,
            gru_b: 16.0,
            levels: 256.0,
            bands: bands as f64,
            time_span: time_span as f64,
            sample_rate: f64::from(SAMPLE_RATE),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.density, self.gru_a, self.gru_b, self.levels, self.bands, self.time_span, self.sample_rate];
        if all.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::param("complexity parameters must be positive and finite"));
        }
        if self.density > 1.0 {
            return Err(Error::param(format!("density {} exceeds 1", self.density)));
        }
        Ok(())
    }

    /// SRN forward passes per second.
    pub fn steps_per_second(&self) -> f64 {
        self.sample_rate / (self.bands * self.time_span)
    }
}

/// Per-component contributions to the model, in GFLOPS.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlopsBreakdown {
    /// `3dG_A²` term.
    pub gru_a: f64,
    /// `3G_B(G_A + G_B)` term.
    pub gru_b: f64,
    /// `2G_B·Q·N_B·N_T` term (all dual FC heads).
    pub heads: f64,
}

impl FlopsBreakdown {
    pub fn total(&self) -> f64 {
        self.gru_a + self.gru_b + self.heads
    }

    /// The two recurrent-layer terms.
    pub fn recurrent(&self) -> f64 {
        self.gru_a + self.gru_b
    }
}

/// Evaluates `(3dG_A² + 3G_B(G_A+G_B) + 2G_B·Q·N_B·N_T) · 2F_s / (N_B·N_T)` term by term.
pub fn flops_breakdown(p: &ComplexityParams) -> FlopsBreakdown {
    let scale = 2.0 * p.sample_rate / (p.bands * p.time_span) / 1e9;
    FlopsBreakdown {
        gru_a: 3.0 * p.density * p.gru_a * p.gru_a * scale,
        gru_b: 3.0 * p.gru_b * (p.gru_a + p.gru_b) * scale,
        heads: 2.0 * p.gru_b * p.levels * p.bands * p.time_span * scale,
    }
}

/// Complexity in GFLOPS.
pub fn flops_model(p: &ComplexityParams) -> f64 {
    flops_breakdown(p).total()
}

/// Timing of one synthesis mode.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub mode: Mode,
    pub frames: usize,
    /// Median wall time of the timed runs.
    pub wall_seconds: f64,
    pub audio_seconds: f64,
    pub rtf: f64,
    pub forward_steps: u64,
    pub steps_per_second: f64,
    /// Kernel FLOPs per second of audio implied by the weights actually used, in GFLOPS.
    pub measured_gflops: f64,
    /// Model value for the same configuration and the weights' actual density.
    pub model_gflops: f64,
}

impl BenchReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mode: {}", self.mode);
        let _ = writeln!(s, "  frames            {}", self.frames);
        let _ = writeln!(s, "  audio             {:.3} s", self.audio_seconds);
        let _ = writeln!(s, "  wall (median of {BENCH_REPEATS}) {:.3} s", self.wall_seconds);
        let _ = writeln!(s, "  real-time factor  {:.4}", self.rtf);
        let _ = writeln!(s, "  forward steps     {}", self.forward_steps);
        let _ = writeln!(s, "  steps per second  {:.0}", self.steps_per_second);
        let _ = writeln!(s, "  kernel GFLOPS     {:.4} (model {:.4})", self.measured_gflops, self.model_gflops);
        s
    }

    /// `key: value` lines with a mode prefix.
    pub fn to_key_values(&self) -> String {
        let m = self.mode;
        let mut s = String::new();
        let _ = writeln!(s, "{m}.frames: {}", self.frames);
        let _ = writeln!(s, "{m}.audio_seconds: {}", self.audio_seconds);
        let _ = writeln!(s, "{m}.wall_seconds: {}", self.wall_seconds);
        let _ = writeln!(s, "{m}.rtf: {}", self.rtf);
        let _ = writeln!(s, "{m}.forward_steps: {}", self.forward_steps);
        let _ = writeln!(s, "{m}.steps_per_second: {}", self.steps_per_second);
        let _ = writeln!(s, "{m}.measured_gflops: {}", self.measured_gflops);
        let _ = writeln!(s, "{m}.model_gflops: {}", self.model_gflops);
        s
    }
}

/// Inputs and step count for one mode, ready to be timed.
struct BenchPlan<'a> {
    weights: &'a ModelWeights,
    mode: Mode,
    fb: &'a PrototypeFilterBank,
    seed: u64,
    input: Vec<FeatureFrame>,
    forward_steps: u64,
    times: Vec<f64>,
}

impl<'a> BenchPlan<'a> {
    /// Validates the request and runs the counting pass, which doubles as the warm-up.
    fn new(w: &'a ModelWeights, mode: Mode, frames: usize, fb: &'a PrototypeFilterBank, seed: u64) -> Result<Self> {
        if frames < MIN_BENCH_FRAMES {
            return Err(Error::param(format!("benchmark needs at least {MIN_BENCH_FRAMES} frames, got {frames}")));
        }
        if w.mode() != mode {
            return Err(Error::param(format!("cannot benchmark {mode} with {} weights", w.mode())));
        }
        let input = synthetic_frames(frames, seed);
        let mut counter = StepCounter::default();
        synthesize_with_probe(&input, w, mode, fb, 1.0, seed, &mut counter)?;
        Ok(Self {
            weights: w,
            mode,
            fb,
            seed,
            input,
            forward_steps: counter.forward_passes,
            times: Vec::with_capacity(BENCH_REPEATS),
        })
    }

    fn time_once(&mut self) -> Result<()> {
        let start = Instant::now();
        let out = synthesize_with_probe(&self.input, self.weights, self.mode, self.fb, 1.0, self.seed, &mut NoProbe)?;
        self.times.push(start.elapsed().as_secs_f64());
        std::hint::black_box(out);
        Ok(())
    }

    fn report(mut self) -> BenchReport {
        self.times.sort_by(f64::total_cmp);
        let wall_seconds = self.times[self.times.len() / 2];
        let frames = self.input.len();
        let audio_seconds = (frames * FRAME_SIZE) as f64 / f64::from(SAMPLE_RATE);

        let cfg = self.weights.config();
        let cost = self.weights.srn_cost();
        let step_rate = self.forward_steps as f64 / audio_seconds;
        let density = cost.gru_a_macs as f64 / (3 * cfg.gru_a * cfg.gru_a) as f64;
        let params = ComplexityParams {
            density: density.max(f64::MIN_POSITIVE),
            gru_a: cfg.gru_a as f64,
            gru_b: cfg.gru_b as f64,
            levels: cfg.levels as f64,
            bands: cfg.bands as f64,
            time_span: cfg.time_span as f64,
            sample_rate: f64::from(SAMPLE_RATE),
        };
        BenchReport {
            mode: self.mode,
            frames,
            wall_seconds,
            audio_seconds,
            rtf: wall_seconds / audio_seconds,
            forward_steps: self.forward_steps,
            steps_per_second: self.forward_steps as f64 / wall_seconds,
            measured_gflops: cost.flops() * step_rate / 1e9,
            model_gflops: flops_model(&params),
        }
    }
}

/// Times synthesis of `frames` synthetic frames: one discarded warm-up run,
/// then the median of [`BENCH_REPEATS`] timed runs.
pub fn rtf_bench(w: &ModelWeights, mode: Mode, frames: usize, fb: &PrototypeFilterBank, seed: u64) -> Result<BenchReport> {
    let mut plan = BenchPlan::new(w, mode, frames, fb, seed)?;
    for _ in 0..BENCH_REPEATS {
        plan.time_once()?;
    }
    Ok(plan.report())
}

/// [`rtf_bench`] for a single-band and a multi-band model with their timed
/// runs alternating, so slow periods on a shared machine hit both modes
/// alike instead of skewing the ratio. Runs never overlap.
pub fn rtf_bench_pair(
    baseline: &ModelWeights,
    mmt: &ModelWeights,
    frames: usize,
    fb: &PrototypeFilterBank,
    seed: u64,
) -> Result<(BenchReport, BenchReport)> {
    let mut b = BenchPlan::new(baseline, Mode::Baseline, frames, fb, seed)?;
    let mut m = BenchPlan::new(mmt, Mode::Mmt, frames, fb, seed)?;
    for _ in 0..BENCH_REPEATS {
        b.time_once()?;
        m.time_once()?;
    }
    Ok((b.report(), m.report()))
}
