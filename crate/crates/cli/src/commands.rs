use std::fmt;
use std::io::Write;

use anyhow::{Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mmlpcnet::attention::{demo_alignments, AlignmentMatrix, SIMPLEX_TOLERANCE};
use mmlpcnet::features::synthetic_frames;
use mmlpcnet::filterbank::{design_prototype, reconstruction_snr, roundtrip, PrototypeFilterBank, DEFAULT_BANDS, DEFAULT_TAPS};
use mmlpcnet::io::{gen_random_weights, load_weights, read_features, save_weights, write_features, write_wav};
use mmlpcnet::perf::{
    flops_breakdown, rtf_bench, rtf_bench_pair, ComplexityParams, FlopsBreakdown, REFERENCE_GFLOPS_BASELINE,
    REFERENCE_GFLOPS_MMT,
};
use mmlpcnet::vocoder::{synthesize, Mode, ModelWeights};
use mmlpcnet::SAMPLE_RATE;

use crate::args::{
    AttnDemoArgs, BenchArgs, BenchMode, FbCheckArgs, FlopsArgs, GenFeaturesArgs, GenWeightsArgs, Mechanism, SignalArg,
    SynthArgs,
};

/// Bad flag combination detected after parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn load(path: &std::path::Path) -> Result<ModelWeights> {
    load_weights(path).with_context(|| format!("reading weights file {}", path.display()))
}

/// Bank matching the model: its own band count for multi-band weights.
fn bank_for(w: &ModelWeights) -> Result<PrototypeFilterBank> {
    let bands = match w.mode() {
        Mode::Mmt => w.config().bands,
        Mode::Baseline => DEFAULT_BANDS,
    };
    Ok(design_prototype(bands, DEFAULT_TAPS)?)
}

pub fn synth(a: &SynthArgs, out: &mut dyn Write) -> Result<bool> {
    let w = load(&a.weights)?;
    let frames =
        read_features(&a.features).with_context(|| format!("reading feature file {}", a.features.display()))?;
    let mode = a.mode.map_or(w.mode(), Mode::from);
    let samples = synthesize(&frames, &w, mode, &bank_for(&w)?, a.temperature, a.seed)?;
    write_wav(&samples, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    writeln!(out,
        "wrote {} samples ({:.3} s, {mode}) to {}",
        samples.len(),
        samples.len() as f64 / f64::from(SAMPLE_RATE),
        a.out.display()
    )?;
    Ok(true)
}

pub fn bench(a: &BenchArgs, out: &mut dyn Write) -> Result<bool> {
    let w = load(&a.weights)?;
    let fb = bank_for(&w)?;
    let mode = a.mode.unwrap_or(match w.mode() {
        Mode::Mmt => BenchMode::Both,
        Mode::Baseline => BenchMode::Baseline,
    });
    if w.mode() == Mode::Baseline && mode != BenchMode::Baseline {
        return Err(usage(format!("{} holds single-band weights; only --mode baseline applies", a.weights.display())));
    }
    // Runs are sequential; timing both loops concurrently would distort both.
    let reports = match mode {
        BenchMode::Baseline => vec![rtf_bench(&w.to_baseline()?, Mode::Baseline, a.frames, &fb, a.seed)?],
        BenchMode::Mmt => vec![rtf_bench(&w, Mode::Mmt, a.frames, &fb, a.seed)?],
        BenchMode::Both => {
            let (b, m) = rtf_bench_pair(&w.to_baseline()?, &w, a.frames, &fb, a.seed)?;
            vec![b, m]
        }
    };
    for r in &reports {
        write!(out, "{}", if a.kv { r.to_key_values() } else { r.to_text() })?;
    }
    if let [b, m] = reports.as_slice() {
        let speedup = b.rtf / m.rtf;
        let step_ratio = b.forward_steps as f64 / m.forward_steps as f64;
        if a.kv {
            writeln!(out, "speedup: {speedup}")?;
            writeln!(out, "step_ratio: {step_ratio}")?;
        } else {
            writeln!(out, "speedup: {speedup:.3}x (rtf baseline / rtf mmt)")?;
            writeln!(out, "forward step ratio: {step_ratio}")?;
        }
    }
    Ok(true)
}

fn breakdown_text(b: &FlopsBreakdown) -> String {
    format!("gru_a {:.4}, gru_b {:.4}, heads {:.4}", b.gru_a, b.gru_b, b.heads)
}

pub fn flops(a: &FlopsArgs, out: &mut dyn Write) -> Result<bool> {
    let split = ComplexityParams {
        density: a.density,
        gru_a: a.gru_a,
        gru_b: a.gru_b,
        levels: a.levels,
        bands: a.bands,
        time_span: a.time_span,
        sample_rate: a.sample_rate,
    };
    split.validate().map_err(|e| usage(e.to_string()))?;
    let single = ComplexityParams { bands: 1.0, time_span: 1.0, ..split };
    let (b1, b2) = (flops_breakdown(&single), flops_breakdown(&split));
    let ratio = b1.total() / b2.total();
    if a.kv {
        writeln!(out, "baseline_gflops: {}", b1.total())?;
        writeln!(out, "mmt_gflops: {}", b2.total())?;
        writeln!(out, "ratio: {ratio}")?;
        writeln!(out, "reference_baseline_gflops: {REFERENCE_GFLOPS_BASELINE:.1}")?;
        writeln!(out, "reference_mmt_gflops: {REFERENCE_GFLOPS_MMT:.1}")?;
        return Ok(true);
    }
    writeln!(out,
        "complexity model: d={} G_A={} G_B={} Q={} F_s={} Hz",
        a.density, a.gru_a, a.gru_b, a.levels, a.sample_rate
    )?;
    writeln!(out, "  baseline (N_B=1, N_T=1): {:.6} GFLOPS  [{}]", b1.total(), breakdown_text(&b1))?;
    writeln!(out, "  mmt (N_B={}, N_T={}): {:.6} GFLOPS  [{}]", a.bands, a.time_span, b2.total(), breakdown_text(&b2))?;
    writeln!(out, "  ratio: {ratio:.4}x")?;
    writeln!(out,
        "  published reference: {REFERENCE_GFLOPS_BASELINE:.1} -> {REFERENCE_GFLOPS_MMT:.1} GFLOPS ({:.2}x), \
         not reproduced by the formula",
        REFERENCE_GFLOPS_BASELINE / REFERENCE_GFLOPS_MMT
    )?;
    Ok(true)
}

fn test_signal(a: &FbCheckArgs) -> Result<Vec<f64>> {
    if a.length < 2 {
        return Err(usage("--length must be at least 2"));
    }
    Ok(match a.signal {
        SignalArg::Impulse => {
            let mut x = vec![0.0; a.length];
            x[a.length / 4] = 1.0;
            x
        }
        SignalArg::Noise => {
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            (0..a.length).map(|_| rng.random_range(-1.0..1.0)).collect()
        }
        SignalArg::Sine => {
            let nyquist = f64::from(SAMPLE_RATE) / 2.0;
            if !(a.freq > 0.0 && a.freq < nyquist) {
                return Err(usage(format!("--freq must lie in (0, {nyquist}) Hz")));
            }
            let w = 2.0 * std::f64::consts::PI * a.freq / f64::from(SAMPLE_RATE);
            (0..a.length).map(|n| (w * n as f64).sin()).collect()
        }
    })
}

pub fn fb_check(a: &FbCheckArgs, out: &mut dyn Write) -> Result<bool> {
    let fb = design_prototype(a.bands, a.taps)?;
    let x = test_signal(a)?;
    let y = roundtrip(&x, &fb)?;
    let snr = reconstruction_snr(&x, &y, fb.group_delay())?;
    writeln!(out, "bands: {}  taps: {}  group delay: {} samples", fb.bands(), fb.taps(), fb.group_delay())?;
    if fb.bands() > 1 {
        writeln!(out,
            "prototype: kaiser beta {:.4}, cutoff {:.6} rad, stopband {:.1} dB",
            fb.kaiser_beta(),
            fb.cutoff(),
            fb.stopband_attenuation_db()
        )?;
    }
    let signal = format!("{:?}", a.signal).to_lowercase();
    if snr.is_infinite() {
        writeln!(out, "{signal} roundtrip SNR: exact match (inf dB)")?;
    } else {
        writeln!(out, "{signal} roundtrip SNR: {snr:.2} dB")?;
    }
    let pass = snr >= 60.0;
    writeln!(out, "{} reconstruction SNR >= 60 dB", if pass { "PASS" } else { "FAIL" })?;
    Ok(pass)
}

const SHADES: &[u8] = b" .:-=+*#%@";

fn heat_row(row: &[f64]) -> String {
    row.iter()
        .map(|&v| SHADES[((v * SHADES.len() as f64) as usize).min(SHADES.len() - 1)] as char)
        .collect()
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

pub fn attn_demo(a: &AttnDemoArgs, out: &mut dyn Write) -> Result<bool> {
    let demo = demo_alignments(a.enc_len, a.dec_len, a.seed)?;
    let m: &AlignmentMatrix = match a.mechanism {
        Mechanism::Lsa => &demo.location,
        Mechanism::Forward => &demo.forward,
        Mechanism::Gmm => &demo.gmm,
    };
    writeln!(out, "{:?} attention, {} encoder positions, {} decoder steps", a.mechanism, a.enc_len, a.dec_len)?;
    let mut sums_ok = true;
    for t in 0..m.decoder_steps() {
        let row = m.row(t);
        let sum: f64 = row.iter().sum();
        sums_ok &= (sum - 1.0).abs() <= SIMPLEX_TOLERANCE && row.iter().all(|&v| v >= 0.0);
        let extra = match a.mechanism {
            Mechanism::Gmm => {
                let means: Vec<String> = demo.gmm_means[t].iter().map(|m| format!("{m:.3}")).collect();
                format!("  means [{}]", means.join(", "))
            }
            _ => String::new(),
        };
        writeln!(out, "{t:4} |{}| sum {sum:.3}{extra}", heat_row(row))?;
    }
    let mut all = sums_ok;
    writeln!(out, "{} rows nonnegative and summing to 1 within {SIMPLEX_TOLERANCE:e}", verdict(sums_ok))?;
    match a.mechanism {
        Mechanism::Lsa => {}
        Mechanism::Forward => {
            let positions: Vec<f64> =
                (0..m.decoder_steps()).map(|t| m.row(t).iter().enumerate().map(|(i, v)| i as f64 * v).sum()).collect();
            let nondecreasing = positions.windows(2).all(|p| p[1] >= p[0]);
            let mut prev: Vec<bool> = (0..m.encoder_len()).map(|i| i == 0).collect();
            let mut support_ok = true;
            for t in 0..m.decoder_steps() {
                let cur: Vec<bool> = m.row(t).iter().map(|&v| v > 0.0).collect();
                support_ok &= cur.iter().enumerate().all(|(i, &c)| !c || prev[i] || (i > 0 && prev[i - 1]));
                prev = cur;
            }
            writeln!(out, "{} support advances at most one position per step", verdict(support_ok))?;
            writeln!(out, "{} expected position nondecreasing", verdict(nondecreasing))?;
            all &= support_ok && nondecreasing;
        }
        Mechanism::Gmm => {
            let increasing = demo.gmm_means.windows(2).all(|w| w[0].iter().zip(&w[1]).all(|(a, b)| b > a));
            writeln!(out, "{} component means strictly increasing", verdict(increasing))?;
            all &= increasing;
        }
    }
    Ok(all)
}

pub fn gen_weights(a: &GenWeightsArgs, out: &mut dyn Write) -> Result<bool> {
    let mode = Mode::from(a.mode);
    let w = gen_random_weights(a.seed, mode)?;
    save_weights(&w, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    writeln!(out, "wrote random {mode} weights (seed {}) to {}", a.seed, a.out.display())?;
    Ok(true)
}

pub fn gen_features(a: &GenFeaturesArgs, out: &mut dyn Write) -> Result<bool> {
    if a.frames == 0 {
        return Err(usage("--frames must be positive"));
    }
    write_features(&synthetic_frames(a.frames, a.seed), &a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    writeln!(out, "wrote {} frames (seed {}) to {}", a.frames, a.seed, a.out.display())?;
    Ok(true)
}
