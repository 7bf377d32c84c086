use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::LazyLock;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{FeatureFrame, LPC_ORDER, NB_BANDS};
use crate::error::{Error, Result};
use crate::SAMPLE_RATE;

/// Default envelope resolution.
pub const DEFAULT_FFT_SIZE: usize = 256;

/// Centre frequencies of the 18 Bark-spaced bands, in Hz.
///
/// These are the 5 ms band edges used by LPCNet (multiples of 200 Hz),
/// which run from DC to Nyquist at 16 kHz. The envelope is linearly
/// interpolated between consecutive anchors.
pub const BARK_ANCHORS_HZ: [f64; NB_BANDS] = [
    0.0, 200.0, 400.0, 600.0, 800.0, 1000.0, 1200.0, 1400.0, 1600.0, 2000.0, 2400.0, 2800.0,
    3200.0, 4000.0, 4800.0, 5600.0, 6800.0, 8000.0,
];

/// One-sided power spectrum over `fft_size / 2 + 1` linear bins.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrum {
    bins: Vec<f64>,
}

impl PowerSpectrum {
    /// Wraps one-sided bins. The implied FFT size must be a power of two ≥ 4.
    pub fn new(bins: Vec<f64>) -> Result<Self> {
        if bins.len() < 3 || !(bins.len() - 1).is_power_of_two() {
            return Err(Error::param(format!(
                "spectrum must have 2^k + 1 bins, got {}",
                bins.len()
            )));
        }
        if let Some(i) = bins.iter().position(|b| !b.is_finite() || *b < 0.0) {
            return Err(Error::Validation {
                location: format!("spectrum bin {i}"),
                reason: format!("power {} is negative or not finite", bins[i]),
            });
        }
        Ok(Self { bins })
    }

    pub fn bins(&self) -> &[f64] {
        &self.bins
    }

    pub fn fft_size(&self) -> usize {
        2 * (self.bins.len() - 1)
    }

    pub fn total_energy(&self) -> f64 {
        self.bins.iter().sum()
    }
}

/// Log10 band energies from the cepstrum (orthonormal DCT-III).
/// `cos(π(i + ½)k / N)` for band `i` and coefficient `k`.
static DCT_COS: LazyLock<[[f64; NB_BANDS]; NB_BANDS]> = LazyLock::new(|| {
    let n = NB_BANDS as f64;
    std::array::from_fn(|i| std::array::from_fn(|k| (PI * (i as f64 + 0.5) * k as f64 / n).cos()))
});

pub(crate) fn band_log_energies(cepstrum: &[f32; NB_BANDS]) -> [f64; NB_BANDS] {
    let n = NB_BANDS as f64;
    let mut out = [0.0; NB_BANDS];
    for (o, cos_row) in out.iter_mut().zip(DCT_COS.iter()) {
        *o = cepstrum
            .iter()
            .zip(cos_row)
            .enumerate()
            .map(|(k, (&c, &cos))| {
                let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
                c as f64 * scale * cos
            })
            .sum();
    }
    out
}

/// Expands a frame's Bark cepstrum into a linear-frequency power envelope.
pub fn cepstrum_to_spectrum(frame: &FeatureFrame, fft_size: usize) -> Result<PowerSpectrum> {
    if fft_size < 64 || !fft_size.is_power_of_two() {
        return Err(Error::param(format!("fft_size {fft_size} must be a power of two >= 64")));
    }
    let band_power = band_log_energies(&frame.cepstrum).map(|l| 10f64.powf(l));
    let nyquist = SAMPLE_RATE as f64 / 2.0;
    let half = fft_size / 2;

    let mut bins = Vec::with_capacity(half + 1);
    let mut band = 0;
    for j in 0..=half {
        let freq = nyquist * j as f64 / half as f64;
        while band + 2 < NB_BANDS && freq > BARK_ANCHORS_HZ[band + 1] {
            band += 1;
        }
        let (lo, hi) = (BARK_ANCHORS_HZ[band], BARK_ANCHORS_HZ[band + 1]);
        let frac = ((freq - lo) / (hi - lo)).clamp(0.0, 1.0);
        bins.push(band_power[band] * (1.0 - frac) + band_power[band + 1] * frac);
    }
    if bins.iter().any(|b| !b.is_finite()) {
        return Err(Error::numeric("cepstrum expands to a non-finite spectrum"));
    }
    Ok(PowerSpectrum { bins })
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Autocorrelation lags `0..=16` of the signal whose power spectrum is given.
///
/// This is the inverse DFT of the even extension of the one-sided spectrum,
/// normalised by the FFT size.
pub fn spectrum_to_autocorrelation(spectrum: &PowerSpectrum) -> Result<Vec<f64>> {
    let n = spectrum.fft_size();
    if n < 2 * LPC_ORDER {
        return Err(Error::param(format!(
            "spectrum of FFT size {n} is too coarse for {LPC_ORDER} lags"
        )));
    }
    if spectrum.bins.iter().all(|&b| b == 0.0) {
        return Err(Error::Degenerate("spectrum is identically zero".into()));
    }
    let half = n / 2;
    let mut buf: Vec<Complex<f64>> = (0..n)
        .map(|f| {
            let bin = if f <= half { f } else { n - f };
            Complex::new(spectrum.bins[bin], 0.0)
        })
        .collect();
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n));
    fft.process(&mut buf);
    Ok(buf[..=LPC_ORDER].iter().map(|c| c.re / n as f64).collect())
}
