//! Cosine-modulated Pseudo-QMF filter bank.
//!
//! A single linear-phase lowpass prototype `p` of length `L` is modulated
//! into `N` bandpass analysis and synthesis filters:
//!
//! ```text
//! h_k[n] =  √N · 2p[n]·cos((2k+1)·π/(2N)·(n − (L−1)/2) + (−1)^k·π/4)
//! g_k[n] = 1/√N · 2p[n]·cos((2k+1)·π/(2N)·(n − (L−1)/2) − (−1)^k·π/4)
//! ```
//!
//! The `√N` split makes the analysis side energy preserving; the overall
//! analysis → synthesis cascade has unit gain and a delay of `L − 1`.
//! Adjacent-band aliasing cancels structurally, so reconstruction quality
//! is governed by the prototype's power complementarity and stopband,
//! which [`design_prototype`] tunes by a golden-section search over the
//! cutoff of a Kaiser-windowed sinc.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Stopband target used to pick the Kaiser β.
pub const STOPBAND_TARGET_DB: f64 = 90.0;
pub const DEFAULT_BANDS: usize = 4;
pub const DEFAULT_TAPS: usize = 64;

/// Returned by [`reconstruction_snr`] for a bit-exact match.
pub const EXACT_MATCH_SNR: f64 = f64::INFINITY;

#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeFilterBank {
    bands: usize,
    taps: usize,
    prototype: Vec<f64>,
    analysis: Vec<Vec<f64>>,
    synthesis: Vec<Vec<f64>>,
    kaiser_beta: f64,
    cutoff: f64,
}

/// `N` decimated band signals of equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandSignals {
    bands: Vec<Vec<f64>>,
}

impl SubbandSignals {
    pub fn new(bands: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = bands.first() else {
            return Err(Error::param("at least one band is required"));
        };
        let len = first.len();
        if bands.iter().any(|b| b.len() != len) {
            return Err(Error::param("subband lengths differ"));
        }
        if bands.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::numeric("subband sample is not finite"));
        }
        Ok(Self { bands })
    }

    pub fn num_bands(&self) -> usize {
        self.bands.len()
    }

    pub fn band_len(&self) -> usize {
        self.bands[0].len()
    }

    pub fn band(&self, k: usize) -> &[f64] {
        &self.bands[k]
    }

    pub fn into_bands(self) -> Vec<Vec<f64>> {
        self.bands
    }
}

impl PrototypeFilterBank {
    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn taps(&self) -> usize {
        self.taps
    }

    pub fn prototype(&self) -> &[f64] {
        &self.prototype
    }

    pub fn analysis_filter(&self, k: usize) -> &[f64] {
        &self.analysis[k]
    }

    pub fn synthesis_filter(&self, k: usize) -> &[f64] {
        &self.synthesis[k]
    }

    /// Delay of the full analysis → synthesis roundtrip, in samples.
    pub fn group_delay(&self) -> usize {
        self.taps - 1
    }

    pub fn kaiser_beta(&self) -> f64 {
        self.kaiser_beta
    }

    /// Prototype cutoff as a fraction of Nyquist.
    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// Zero-phase amplitude response of the prototype at `omega` rad/sample.
    pub fn prototype_response(&self, omega: f64) -> f64 {
        let center = (self.taps as f64 - 1.0) / 2.0;
        self.prototype
            .iter()
            .enumerate()
            .map(|(n, &p)| p * (omega * (n as f64 - center)).cos())
            .sum()
    }

    /// Worst prototype gain beyond `π/N`, relative to DC, in dB (positive).
    pub fn stopband_attenuation_db(&self) -> f64 {
        let edge = PI / self.bands as f64;
        let dc = self.prototype_response(0.0).abs();
        let grid = 4096;
        let worst = (0..=grid)
            .map(|i| edge + (PI - edge) * i as f64 / grid as f64)
            .map(|w| self.prototype_response(w).abs())
            .fold(0.0, f64::max);
        -20.0 * (worst / dc).log10()
    }

    fn from_prototype(bands: usize, prototype: Vec<f64>, kaiser_beta: f64, cutoff: f64) -> Self {
        let taps = prototype.len();
        let (analysis, synthesis) = modulate(bands, &prototype);
        Self { bands, taps, prototype, analysis, synthesis, kaiser_beta, cutoff }
    }
}

fn modulate(bands: usize, prototype: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let taps = prototype.len();
    let center = (taps as f64 - 1.0) / 2.0;
    let gain = (bands as f64).sqrt();
    let mut analysis = Vec::with_capacity(bands);
    let mut synthesis = Vec::with_capacity(bands);
    for k in 0..bands {
        let phase = if k % 2 == 0 { PI / 4.0 } else { -PI / 4.0 };
        let freq = (2 * k + 1) as f64 * PI / (2 * bands) as f64;
        let (h, g): (Vec<f64>, Vec<f64>) = prototype
            .iter()
            .enumerate()
            .map(|(n, &p)| {
                let arg = freq * (n as f64 - center);
                (gain * 2.0 * p * snapped_cos(arg + phase), 2.0 * p * snapped_cos(arg - phase) / gain)
            })
            .unzip();
        analysis.push(h);
        synthesis.push(g);
    }
    (analysis, synthesis)
}

/// Modulation angles are multiples of π/(4N); the ones that are odd
/// multiples of π/2 should give an exact zero.
fn snapped_cos(x: f64) -> f64 {
    let c = x.cos();
    if c.abs() < 1e-12 {
        0.0
    } else {
        c
    }
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half = x / 2.0;
    for k in 1..200 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Kaiser's β for a given stopband attenuation in dB.
pub fn kaiser_beta_for(attenuation_db: f64) -> f64 {
    if attenuation_db > 50.0 {
        0.1102 * (attenuation_db - 8.7)
    } else if attenuation_db >= 21.0 {
        0.5842 * (attenuation_db - 21.0).powf(0.4) + 0.07886 * (attenuation_db - 21.0)
    } else {
        0.0
    }
}

fn kaiser_lowpass(taps: usize, cutoff: f64, beta: f64) -> Vec<f64> {
    let center = (taps as f64 - 1.0) / 2.0;
    let norm = bessel_i0(beta);
    let mut out: Vec<f64> = (0..taps)
        .map(|n| {
            let t = n as f64 - center;
            let sinc = if t == 0.0 { 1.0 } else { (PI * cutoff * t).sin() / (PI * cutoff * t) };
            let r = 2.0 * n as f64 / (taps as f64 - 1.0) - 1.0;
            cutoff * sinc * bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / norm
        })
        .collect();
    // Mirror so the linear-phase symmetry is exact rather than up to rounding.
    for n in 0..taps / 2 {
        out[taps - 1 - n] = out[n];
    }
    out
}

/// Scales the prototype so the cascade's main tap is exactly 1.
fn normalize_prototype(bands: usize, prototype: &mut [f64]) {
    let (h, g) = modulate(bands, prototype);
    let taps = prototype.len();
    let peak: f64 = (0..bands)
        .map(|k| (0..taps).map(|j| h[k][j] * g[k][taps - 1 - j]).sum::<f64>())
        .sum();
    let scale = 1.0 / peak.abs().sqrt();
    prototype.iter_mut().for_each(|p| *p *= scale);
}

/// Mean squared roundtrip error over the `N` impulse phases.
fn impulse_reconstruction_error(fb: &PrototypeFilterBank) -> f64 {
    let n = fb.bands;
    let len = 4 * fb.taps + n;
    let delay = fb.group_delay();
    let mut total = 0.0;
    for phase in 0..n {
        let mut x = vec![0.0; len];
        x[fb.taps + phase] = 1.0;
        let y = roundtrip(&x, fb).expect("impulse roundtrip");
        total += (0..y.len() - delay).map(|i| (y[i + delay] - x[i]).powi(2)).sum::<f64>();
    }
    total / n as f64
}

fn candidate(bands: usize, taps: usize, cutoff: f64, beta: f64) -> PrototypeFilterBank {
    let mut proto = kaiser_lowpass(taps, cutoff, beta);
    normalize_prototype(bands, &mut proto);
    PrototypeFilterBank::from_prototype(bands, proto, beta, cutoff)
}

/// Designs an `N`-band bank with an `L`-tap prototype.
///
/// `N ∈ {2, 4, 8}` with `L` a multiple of `2N` and at least `8N`. `N = 1`
/// is accepted for any even `L` and yields the trivial bank, which is a pure
/// `L − 1` sample delay.
pub fn design_prototype(bands: usize, taps: usize) -> Result<PrototypeFilterBank> {
    if bands == 1 {
        if taps < 2 || !taps.is_multiple_of(2) {
            return Err(Error::param(format!("single-band bank needs an even tap count >= 2, got {taps}")));
        }
        let mut proto = vec![0.0; taps];
        proto[taps / 2 - 1] = 0.5;
        proto[taps / 2] = 0.5;
        return Ok(PrototypeFilterBank::from_prototype(1, proto, 0.0, 1.0));
    }
    if ![2, 4, 8].contains(&bands) {
        return Err(Error::param(format!("unsupported band count {bands}; expected 1, 2, 4 or 8")));
    }
    if !taps.is_multiple_of(2 * bands) || taps < 8 * bands {
        return Err(Error::param(format!(
            "tap count {taps} must be a multiple of {} and at least {}",
            2 * bands,
            8 * bands
        )));
    }

    let beta = kaiser_beta_for(STOPBAND_TARGET_DB);
    let nominal = 1.0 / (2 * bands) as f64;
    let objective = |cutoff: f64| impulse_reconstruction_error(&candidate(bands, taps, cutoff, beta));

    // Golden-section search on [0.5, 1.5] × the nominal π/(2N) cutoff.
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.5 * nominal, 1.5 * nominal);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (objective(x1), objective(x2));
    while hi - lo > 1e-9 * nominal {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = objective(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = objective(x2);
        }
    }
    Ok(candidate(bands, taps, 0.5 * (lo + hi), beta))
}

/// Filters with each analysis row and keeps every `N`-th output.
///
/// Band `k` sample `m` is `Σ_j h_k[j]·x[mN − j]` with zero padding, for
/// `m < ceil(T/N)`.
pub fn analysis(signal: &[f64], fb: &PrototypeFilterBank) -> Result<SubbandSignals> {
    if signal.is_empty() {
        return Err(Error::param("analysis needs at least one sample"));
    }
    if signal.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("input signal is not finite"));
    }
    let n = fb.bands;
    let len = signal.len().div_ceil(n);
    let bands = fb
        .analysis
        .iter()
        .map(|h| {
            (0..len)
                .map(|m| {
                    let t = m * n;
                    let start = t.saturating_sub(signal.len() - 1);
                    let end = t.min(h.len() - 1);
                    if start > end {
                        return 0.0;
                    }
                    (start..=end).map(|j| h[j] * signal[t - j]).sum()
                })
                .collect()
        })
        .collect();
    SubbandSignals::new(bands)
}

/// Upsamples every band by `N`, filters with the synthesis rows, sums and
/// scales by `N`. The output has `N × band_len` samples and lags the
/// original signal by [`PrototypeFilterBank::group_delay`].
pub fn synthesis(subbands: &SubbandSignals, fb: &PrototypeFilterBank) -> Result<Vec<f64>> {
    let n = fb.bands;
    if subbands.num_bands() != n {
        return Err(Error::param(format!(
            "bank has {n} bands but {} subband signals were supplied",
            subbands.num_bands()
        )));
    }
    let len = subbands.band_len();
    let mut out = vec![0.0; n * len];
    let scale = n as f64;
    for (g, u) in fb.synthesis.iter().zip(&subbands.bands) {
        // Output t = m·N + p only meets taps j ≡ p (mod N), i.e. g[p + i·N] · u[m − i].
        for p in 0..n {
            let phase: Vec<f64> = g.iter().skip(p).step_by(n).copied().collect();
            for m in 0..len {
                let reach = phase.len().min(m + 1);
                let acc: f64 = phase[..reach].iter().zip(u[..=m].iter().rev()).map(|(h, x)| h * x).sum();
                out[m * n + p] += acc * scale;
            }
        }
    }
    Ok(out)
}

/// `synthesis(analysis(x))`, still carrying the group delay.
pub fn roundtrip(signal: &[f64], fb: &PrototypeFilterBank) -> Result<Vec<f64>> {
    synthesis(&analysis(signal, fb)?, fb)
}

/// `10·log10(Σx² / Σ(x − x̂[·+delay])²)` over the overlapping region.
pub fn reconstruction_snr(original: &[f64], reconstructed: &[f64], delay: usize) -> Result<f64> {
    let overlap = original.len().min(reconstructed.len().saturating_sub(delay));
    if overlap == 0 {
        return Err(Error::param("signals do not overlap at this delay"));
    }
    let (signal, noise) = (0..overlap).fold((0.0, 0.0), |(s, e), i| {
        let x = original[i];
        let d = x - reconstructed[i + delay];
        (s + x * x, e + d * d)
    });
    if noise == 0.0 {
        return Ok(EXACT_MATCH_SNR);
    }
    Ok(10.0 * (signal / noise).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::OnceLock;

    fn default_bank() -> &'static PrototypeFilterBank {
        static FB: OnceLock<PrototypeFilterBank> = OnceLock::new();
        FB.get_or_init(|| design_prototype(4, 64).unwrap())
    }

    fn noise(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    /// Full convolution followed by decimation.
    fn direct_analysis(x: &[f64], h: &[f64], n: usize) -> Vec<f64> {
        let mut full = vec![0.0; x.len() + h.len() - 1];
        for (i, xv) in x.iter().enumerate() {
            for (j, hv) in h.iter().enumerate() {
                full[i + j] += xv * hv;
            }
        }
        full.iter().step_by(n).take(x.len().div_ceil(n)).copied().collect()
    }

    #[test]
    fn rejects_invalid_shapes() {
        assert!(design_prototype(3, 48).is_err());
        assert!(design_prototype(4, 60).is_err());
        assert!(design_prototype(4, 24).is_err());
        assert!(design_prototype(1, 3).is_err());
    }

    #[test]
    fn prototype_is_symmetric() {
        for fb in [default_bank().clone(), design_prototype(2, 32).unwrap(), design_prototype(8, 128).unwrap()] {
            let p = fb.prototype();
            for k in 0..p.len() {
                assert_eq!(p[k], p[p.len() - 1 - k]);
            }
        }
    }

    #[test]
    fn rows_are_modulated_prototype() {
        let fb = default_bank();
        let (h, g) = modulate(4, fb.prototype());
        for k in 0..4 {
            assert_eq!(fb.analysis_filter(k), &h[k][..]);
            assert_eq!(fb.synthesis_filter(k), &g[k][..]);
        }
        assert_eq!(fb.group_delay(), 63);
    }

    #[test]
    fn stopband_meets_design_target() {
        let fb = default_bank();
        assert!(fb.stopband_attenuation_db() >= 80.0, "{}", fb.stopband_attenuation_db());
    }

    #[test]
    fn single_band_is_pure_delay() {
        let fb = design_prototype(1, 2).unwrap();
        let x = noise(500, 1);
        let y = roundtrip(&x, &fb).unwrap();
        assert_eq!(y.len(), 500);
        for i in 0..499 {
            assert!((y[i + 1] - x[i]).abs() < 1e-12);
        }
        assert_eq!(reconstruction_snr(&x, &y, 1).unwrap(), EXACT_MATCH_SNR);
    }

    #[test]
    fn impulse_roundtrip_above_60_db() {
        let fb = default_bank();
        for pos in [100, 101, 102, 103] {
            let mut x = vec![0.0; 512];
            x[pos] = 1.0;
            let y = roundtrip(&x, fb).unwrap();
            let snr = reconstruction_snr(&x, &y, fb.group_delay()).unwrap();
            assert!(snr >= 60.0, "impulse at {pos}: {snr} dB");
        }
    }

    #[test]
    fn noise_roundtrip_above_60_db() {
        let fb = default_bank();
        let x = noise(16_000, 2);
        let y = roundtrip(&x, fb).unwrap();
        assert_eq!(y.len(), 16_000);
        let snr = reconstruction_snr(&x, &y, fb.group_delay()).unwrap();
        assert!(snr >= 60.0, "{snr}");
    }

    #[test]
    fn analysis_matches_direct_convolution() {
        let fb = default_bank();
        let x = noise(1001, 3);
        let sub = analysis(&x, fb).unwrap();
        for k in 0..4 {
            let want = direct_analysis(&x, fb.analysis_filter(k), 4);
            assert_eq!(sub.band(k).len(), want.len());
            for (a, b) in sub.band(k).iter().zip(&want) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_in_zero_out() {
        let fb = default_bank();
        let sub = analysis(&[0.0; 300], fb).unwrap();
        assert!(sub.into_bands().iter().flatten().all(|&v| v == 0.0));
        let out = synthesis(&SubbandSignals::new(vec![vec![0.0; 10]; 4]).unwrap(), fb).unwrap();
        assert_eq!(out, vec![0.0; 40]);
    }

    #[test]
    fn dc_lands_in_band_zero() {
        let fb = default_bank();
        let sub = analysis(&vec![1.0; 4000], fb).unwrap();
        let skip = fb.taps() / 4;
        let energy = |k: usize| sub.band(k)[skip..].iter().map(|v| v * v).sum::<f64>();
        let e0 = energy(0);
        // Band k sees DC at the prototype offset (2k+1)π/2N; band 0 sits at the
        // prototype's π/2N crossover.
        let edge = fb.prototype_response(PI / 8.0).powi(2) / fb.prototype_response(0.0).powi(2);
        let stop = 10f64.powf(-fb.stopband_attenuation_db() / 10.0);
        for k in 1..4 {
            assert!(energy(k) / e0 <= stop / edge, "band {k}: {}", energy(k) / e0);
        }
    }

    #[test]
    fn white_noise_energy_preserved() {
        let fb = default_bank();
        let x = noise(32_000, 4);
        let sub = analysis(&x, fb).unwrap();
        let ein: f64 = x.iter().map(|v| v * v).sum();
        let eout: f64 = sub.into_bands().iter().flatten().map(|v| v * v).sum();
        let db = 10.0 * (eout / ein).log10();
        assert!(db.abs() < 0.1, "{db} dB");
    }

    #[test]
    fn synthesis_rejects_band_mismatch() {
        let fb = default_bank();
        let sub = SubbandSignals::new(vec![vec![0.0; 4]; 2]).unwrap();
        assert!(synthesis(&sub, fb).is_err());
        assert!(SubbandSignals::new(vec![vec![0.0; 4], vec![0.0; 3]]).is_err());
    }

    #[test]
    fn snr_examples() {
        let x = noise(1000, 5);
        assert_eq!(reconstruction_snr(&x, &x, 0).unwrap(), EXACT_MATCH_SNR);
        assert!(reconstruction_snr(&x, &vec![0.0; 1000], 0).unwrap().abs() < 1e-12);
        assert!(reconstruction_snr(&x, &x, 1000).is_err());

        let eps = 0.01;
        let n = noise(1000, 6);
        let y: Vec<f64> = x.iter().zip(&n).map(|(a, b)| a + eps * b).collect();
        let sx = (x.iter().map(|v| v * v).sum::<f64>() / 1000.0).sqrt();
        let sn = (n.iter().map(|v| v * v).sum::<f64>() / 1000.0).sqrt();
        let want = -20.0 * (eps * sn / sx).log10();
        assert!((reconstruction_snr(&x, &y, 0).unwrap() - want).abs() < 0.5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn analysis_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0, len in 1usize..300) {
            let fb = default_bank();
            let x = noise(len, seed);
            let y = noise(len, seed.wrapping_add(1));
            let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let sx = analysis(&x, fb).unwrap();
            let sy = analysis(&y, fb).unwrap();
            let sm = analysis(&mix, fb).unwrap();
            for k in 0..4 {
                for i in 0..sm.band_len() {
                    let want = a * sx.band(k)[i] + b * sy.band(k)[i];
                    prop_assert!((sm.band(k)[i] - want).abs() < 1e-10);
                }
            }
        }

        #[test]
        fn critically_sampled(len in 1usize..2000) {
            let fb = default_bank();
            let sub = analysis(&vec![0.5; len], fb).unwrap();
            let total = sub.num_bands() * sub.band_len();
            prop_assert!(total >= len && total <= len + 4 * 64);
        }
    }
}
