use super::spectrum::{cepstrum_to_spectrum, spectrum_to_autocorrelation, PowerSpectrum};
use super::FeatureFrame;
use crate::error::{Error, Result};

/// Predictor order used throughout the vocoder.
pub const LPC_ORDER: usize = 16;

/// Lag-window value reached at lag 16 (−40 dB).
const LAG_WINDOW_FLOOR: f64 = 0.01;
/// White-noise correction added to lag 0 on the regularised retry.
const NOISE_FLOOR: f64 = 1e-6;
/// Bands whose energy falls below this fraction of the total are treated as silent.
const EMPTY_BAND_RATIO: f64 = 1e-12;

/// Prediction coefficients `a[1..=order]` for `p[t] = Σ a[k]·s[t-k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpcCoeffs {
    coeffs: Vec<f64>,
}

impl LpcCoeffs {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::param("LPC order must be positive"));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::numeric("LPC coefficient is not finite"));
        }
        Ok(Self { coeffs })
    }

    pub fn zeros(order: usize) -> Self {
        Self { coeffs: vec![0.0; order] }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    /// `coeffs()[k - 1]` multiplies the sample `k` steps in the past.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }
}

/// Per-step record of a Levinson-Durbin run.
#[derive(Debug, Clone)]
pub struct LevinsonTrace {
    pub coeffs: LpcCoeffs,
    pub reflection: Vec<f64>,
    /// Prediction error energy before step 1 (`r[0]`) and after every step.
    pub residual: Vec<f64>,
    /// True when the plain recursion was unstable and the lag-windowed retry was used.
    pub regularized: bool,
}

/// Gaussian lag window reaching −40 dB at lag 16.
pub fn lpc_lag_window(lag: usize) -> f64 {
    let alpha_sq = -2.0 * LAG_WINDOW_FLOOR.ln() / (LPC_ORDER * LPC_ORDER) as f64;
    (-0.5 * alpha_sq * (lag * lag) as f64).exp()
}

fn recursion(r: &[f64], order: usize) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let mut a = vec![0.0; order];
    let mut prev = vec![0.0; order];
    let mut reflection = Vec::with_capacity(order);
    let mut residual = Vec::with_capacity(order + 1);
    let mut err = r[0];
    residual.push(err);
    for i in 0..order {
        if err <= r[0] * 1e-300 {
            // Perfectly predictable: remaining coefficients stay zero.
            reflection.push(0.0);
            residual.push(err);
            continue;
        }
        let acc = r[i + 1] - (0..i).map(|j| a[j] * r[i - j]).sum::<f64>();
        let k = acc / err;
        if !k.is_finite() || k.abs() >= 1.0 {
            return None;
        }
        prev[..i].copy_from_slice(&a[..i]);
        a[i] = k;
        for j in 0..i {
            a[j] = prev[j] - k * prev[i - 1 - j];
        }
        err *= 1.0 - k * k;
        reflection.push(k);
        residual.push(err);
    }
    Some((a, reflection, residual))
}

/// Levinson-Durbin recursion with the per-step reflection and residual trace.
///
/// If a reflection coefficient reaches magnitude 1 the autocorrelation is
/// lag-windowed, lag 0 gets a `1e-6·r[0]` noise floor, and the recursion is
/// retried once.
pub fn levinson_durbin_traced(autocorr: &[f64], order: usize) -> Result<LevinsonTrace> {
    if order == 0 {
        return Err(Error::param("LPC order must be positive"));
    }
    if autocorr.len() < order + 1 {
        return Err(Error::param(format!(
            "need {} autocorrelation lags for order {order}, got {}",
            order + 1,
            autocorr.len()
        )));
    }
    if autocorr.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("autocorrelation is not finite"));
    }
    if autocorr[0] <= 0.0 {
        return Err(Error::Degenerate(format!("autocorrelation r[0] = {} is not positive", autocorr[0])));
    }
    let r = &autocorr[..=order];
    if let Some((a, reflection, residual)) = recursion(r, order) {
        return Ok(LevinsonTrace { coeffs: LpcCoeffs { coeffs: a }, reflection, residual, regularized: false });
    }
    let windowed: Vec<f64> = r
        .iter()
        .enumerate()
        .map(|(lag, &v)| {
            let w = v * lpc_lag_window(lag);
            if lag == 0 {
                w + NOISE_FLOOR * r[0]
            } else {
                w
            }
        })
        .collect();
    let (a, reflection, residual) = recursion(&windowed, order)
        .ok_or_else(|| Error::numeric("Levinson-Durbin unstable after lag-window regularization"))?;
    Ok(LevinsonTrace { coeffs: LpcCoeffs { coeffs: a }, reflection, residual, regularized: true })
}

/// Solves the Toeplitz normal equations for the order-`order` predictor.
pub fn levinson_durbin(autocorr: &[f64], order: usize) -> Result<LpcCoeffs> {
    levinson_durbin_traced(autocorr, order).map(|t| t.coeffs)
}

/// LPC for one subband, plus whether the band was silent.
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandLpc {
    pub coeffs: LpcCoeffs,
    /// Set when the band carried no energy and zero coefficients were substituted.
    pub degenerate: bool,
}

/// Critically sampled spectrum of band `band` out of `bands`.
///
/// The one-sided spectrum is cut into `bands` equal ranges sharing their
/// edge bins; each range is the one-sided spectrum of the decimated band.
/// Odd bands are mirrored, as decimation inverts their frequency axis.
fn subband_spectrum(spectrum: &PowerSpectrum, band: usize, bands: usize) -> Result<PowerSpectrum> {
    if bands == 0 || band >= bands {
        return Err(Error::param(format!("band {band} out of range for {bands} bands")));
    }
    let half = spectrum.fft_size() / 2;
    if !half.is_multiple_of(bands) || !(half / bands).is_power_of_two() || 2 * half / bands < 2 * LPC_ORDER {
        return Err(Error::param(format!(
            "FFT size {} cannot be split into {bands} subbands of at least {} bins",
            spectrum.fft_size(),
            2 * LPC_ORDER
        )));
    }
    let width = half / bands;
    let mut bins = spectrum.bins()[band * width..=(band + 1) * width].to_vec();
    if band % 2 == 1 {
        bins.reverse();
    }
    PowerSpectrum::new(bins)
}

/// Per-subband LPC from a full-band spectrum.
pub fn subband_lpc_from_spectrum(spectrum: &PowerSpectrum, band: usize, bands: usize) -> Result<SubbandLpc> {
    let sub = subband_spectrum(spectrum, band, bands)?;
    let total = spectrum.total_energy();
    if total <= 0.0 || sub.total_energy() < EMPTY_BAND_RATIO * total {
        return Ok(SubbandLpc { coeffs: LpcCoeffs::zeros(LPC_ORDER), degenerate: true });
    }
    let r = spectrum_to_autocorrelation(&sub)?;
    Ok(SubbandLpc { coeffs: levinson_durbin(&r, LPC_ORDER)?, degenerate: false })
}

/// Per-subband LPC for a feature frame.
pub fn subband_lpc(frame: &FeatureFrame, band: usize, bands: usize, fft_size: usize) -> Result<SubbandLpc> {
    let spectrum = cepstrum_to_spectrum(frame, fft_size)?;
    subband_lpc_from_spectrum(&spectrum, band, bands)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Autocorrelation of a random AR-ish signal: always positive definite.
    fn random_stable_autocorr(rng: &mut ChaCha8Rng, order: usize) -> Vec<f64> {
        let len = 256;
        let mut x = vec![0.0f64; len];
        let pole = rng.random_range(-0.95..0.95);
        let mut prev = 0.0;
        for v in x.iter_mut() {
            prev = pole * prev + rng.random_range(-1.0..1.0);
            *v = prev;
        }
        (0..=order)
            .map(|lag| (lag..len).map(|i| x[i] * x[i - lag]).sum::<f64>() / len as f64)
            .collect()
    }

    fn toeplitz_solve(r: &[f64], order: usize) -> Vec<f64> {
        let m = DMatrix::from_fn(order, order, |i, j| r[i.abs_diff(j)]);
        let rhs = DVector::from_iterator(order, r[1..=order].iter().copied());
        m.lu().solve(&rhs).expect("singular Toeplitz system").iter().copied().collect()
    }

    #[test]
    fn white_noise_has_zero_predictor() {
        let mut r = vec![0.0; 17];
        r[0] = 1.0;
        let a = levinson_durbin(&r, 16).unwrap();
        assert_eq!(a.order(), 16);
        assert!(a.coeffs().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn first_order_case() {
        let a = levinson_durbin(&[1.0, 0.9], 1).unwrap();
        assert!((a.coeffs()[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn matches_dense_toeplitz_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let r = random_stable_autocorr(&mut rng, 16);
            let trace = levinson_durbin_traced(&r, 16).unwrap();
            assert!(!trace.regularized);
            let oracle = toeplitz_solve(&r, 16);
            for (a, b) in trace.coeffs.coeffs().iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-8, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn residual_is_nonnegative_and_nonincreasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let r = random_stable_autocorr(&mut rng, 16);
            let trace = levinson_durbin_traced(&r, 16).unwrap();
            assert_eq!(trace.residual.len(), 17);
            for w in trace.residual.windows(2) {
                assert!(w[1] >= 0.0 && w[1] <= w[0]);
            }
        }
    }

    #[test]
    fn nonpositive_lag_zero_is_degenerate() {
        assert!(matches!(levinson_durbin(&[0.0, 0.0], 1), Err(Error::Degenerate(_))));
        assert!(matches!(levinson_durbin(&[-1.0, 0.0], 1), Err(Error::Degenerate(_))));
    }

    #[test]
    fn unstable_input_takes_regularized_path() {
        // Not positive definite: the plain recursion gives k2 ≈ -1.07.
        let trace = levinson_durbin_traced(&[1.0, 0.5, -0.55], 2).unwrap();
        assert!(trace.regularized);
        assert!(trace.reflection.iter().all(|k| k.abs() < 1.0));
        let bad = levinson_durbin_traced(&[1.0, 1.5], 1).unwrap_err();
        assert!(matches!(bad, Error::Numeric(_)));
    }

    #[test]
    fn lag_window_hits_minus_40_db() {
        assert_eq!(lpc_lag_window(0), 1.0);
        assert!((lpc_lag_window(16) - 0.01).abs() < 1e-12);
    }

    #[test]
    fn flat_spectrum_gives_zero_lpc_in_every_band() {
        let s = PowerSpectrum::new(vec![1.0; 129]).unwrap();
        for band in 0..4 {
            let lpc = subband_lpc_from_spectrum(&s, band, 4).unwrap();
            assert!(!lpc.degenerate);
            assert!(lpc.coeffs.coeffs().iter().all(|c| c.abs() < 1e-12), "band {band}");
        }
    }

    #[test]
    fn empty_bands_are_flagged() {
        let mut bins = vec![0.0; 129];
        for (i, b) in bins.iter_mut().enumerate().take(31) {
            *b = 1.0 + (i as f64 * 0.3).sin().powi(2) * 10.0;
        }
        let s = PowerSpectrum::new(bins).unwrap();
        let b0 = subband_lpc_from_spectrum(&s, 0, 4).unwrap();
        assert!(!b0.degenerate);
        assert!(b0.coeffs.coeffs().iter().any(|c| c.abs() > 1e-3));
        for band in 1..4 {
            let lpc = subband_lpc_from_spectrum(&s, band, 4).unwrap();
            assert!(lpc.degenerate, "band {band}");
            assert_eq!(lpc.coeffs, LpcCoeffs::zeros(16));
        }
    }

    #[test]
    fn subband_equals_composed_oracles() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let bins: Vec<f64> = (0..129).map(|_| rng.random_range(0.1..4.0)).collect();
        let s = PowerSpectrum::new(bins.clone()).unwrap();
        let got = subband_lpc_from_spectrum(&s, 2, 4).unwrap();

        // Band 2 of 4 over a 256-point spectrum: bins 64..=96 form a 64-point spectrum.
        let sub = &bins[64..=96];
        let n = 64;
        let r: Vec<f64> = (0..=16)
            .map(|k| {
                (0..n)
                    .map(|f| {
                        let p = if f <= n / 2 { sub[f] } else { sub[n - f] };
                        p * (2.0 * std::f64::consts::PI * (f * k) as f64 / n as f64).cos()
                    })
                    .sum::<f64>()
                    / n as f64
            })
            .collect();
        let oracle = toeplitz_solve(&r, 16);
        for (a, b) in got.coeffs.coeffs().iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn subband_rejects_bad_band() {
        let s = PowerSpectrum::new(vec![1.0; 129]).unwrap();
        assert!(subband_lpc_from_spectrum(&s, 4, 4).is_err());
    }
}
