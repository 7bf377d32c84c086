//! Forward computations of three attention mechanisms on synthetic
//! encoder/decoder states, plus the multi-guidance training losses.
//!
//! * Location-sensitive attention scores every encoder position from the
//!   decoder query, the encoder key and a convolution over the cumulative
//!   alignment.
//! * Forward attention restricts each step to staying put or advancing
//!   one position: `α'(i) ∝ (α(i) + α(i−1)) · base(i)`.
//! * GMM attention is purely location based: a mixture of Gaussians whose
//!   means only move forward.
//!
//! Everything runs in `f64` and is meant for toy sizes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Width of the location convolution.
pub const LOCATION_KERNEL: usize = 31;
/// Number of location filters.
pub const LOCATION_FILTERS: usize = 32;
/// Lower bound added to every GMM component width.
pub const GMM_MIN_WIDTH: f64 = 1e-3;
/// Forward attention fails below this normalizer.
pub const FORWARD_UNDERFLOW: f64 = 1e-30;
/// Tolerance on row sums.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

/// Largest encoder length accepted by the demo driver.
pub const MAX_ENCODER_LEN: usize = 64;
/// Largest decoder length accepted by the demo driver.
pub const MAX_DECODER_LEN: usize = 256;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::param(format!("{rows}x{cols} matrix needs {} values, got {}", rows * cols, data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let data = (0..rows * cols).map(|i| f(i / cols, i % cols)).collect();
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.data.chunks_exact(self.cols).map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }
}

fn check_row(row: &[f64]) -> std::result::Result<(), String> {
    if let Some(v) = row.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(format!("entry {v} is not a nonnegative real"));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(format!("row sums to {sum}"));
    }
    Ok(())
}

/// `T_dec × L_enc` alignment whose rows lie on the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentMatrix(Matrix);

impl AlignmentMatrix {
    pub fn new(scores: Matrix) -> Result<Self> {
        if scores.cols == 0 {
            return Err(Error::param("alignment needs at least one encoder position"));
        }
        for r in 0..scores.rows {
            check_row(scores.row(r)).map_err(|reason| Error::Validation { location: format!("alignment row {r}"), reason })?;
        }
        Ok(Self(scores))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::param("alignment rows differ in length"));
        }
        Self::new(Matrix::new(rows.len(), cols, rows.concat())?)
    }

    pub fn scores(&self) -> &Matrix {
        &self.0
    }

    pub fn decoder_steps(&self) -> usize {
        self.0.rows
    }

    pub fn encoder_len(&self) -> usize {
        self.0.cols
    }

    pub fn row(&self, t: usize) -> &[f64] {
        self.0.row(t)
    }
}

/// Parameters of location-sensitive attention.
#[derive(Debug, Clone, PartialEq)]
pub struct LsaParams {
    /// `attn × query`
    pub query_proj: Matrix,
    /// `attn × key`
    pub key_proj: Matrix,
    /// `attn × filters`
    pub location_proj: Matrix,
    /// `filters × kernel`
    pub location_conv: Matrix,
    pub bias: Vec<f64>,
    pub score: Vec<f64>,
}

impl LsaParams {
    pub fn zeros(attn: usize, query: usize, key: usize) -> Self {
        Self {
            query_proj: Matrix::zeros(attn, query),
            key_proj: Matrix::zeros(attn, key),
            location_proj: Matrix::zeros(attn, LOCATION_FILTERS),
            location_conv: Matrix::zeros(LOCATION_FILTERS, LOCATION_KERNEL),
            bias: vec![0.0; attn],
            score: vec![0.0; attn],
        }
    }

    pub fn random<R: Rng + ?Sized>(attn: usize, query: usize, key: usize, scale: f64, rng: &mut R) -> Self {
        let mut m = |r, c| Matrix::from_fn(r, c, |_, _| rng.random_range(-scale..=scale));
        let query_proj = m(attn, query);
        let key_proj = m(attn, key);
        let location_proj = m(attn, LOCATION_FILTERS);
        let location_conv = m(LOCATION_FILTERS, LOCATION_KERNEL);
        let bias = m(1, attn).data;
        let score = m(1, attn).data;
        Self { query_proj, key_proj, location_proj, location_conv, bias, score }
    }

    fn attn_dim(&self) -> usize {
        self.bias.len()
    }
}

/// Zero-padded "same" convolution of the cumulative alignment, one row per filter.
fn location_features(cum: &[f64], conv: &Matrix) -> Matrix {
    let half = conv.cols / 2;
    Matrix::from_fn(conv.rows, cum.len(), |f, i| {
        (0..conv.cols)
            .filter_map(|k| (i + k).checked_sub(half).and_then(|j| cum.get(j)).map(|&c| conv.get(f, k) * c))
            .sum()
    })
}

/// Numerically stable softmax.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

/// `ln(1 + eˣ)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Location-sensitive attention row for one decoder step.
pub fn lsa_score(query: &[f64], keys: &[Vec<f64>], cum_align: &[f64], p: &LsaParams) -> Result<Vec<f64>> {
    let attn = p.attn_dim();
    let shapes_ok = p.query_proj.rows == attn
        && p.query_proj.cols == query.len()
        && p.key_proj.rows == attn
        && p.location_proj.rows == attn
        && p.location_proj.cols == p.location_conv.rows
        && p.score.len() == attn;
    if !shapes_ok {
        return Err(Error::param("location-sensitive attention parameter shapes disagree"));
    }
    if keys.is_empty() || keys.len() != cum_align.len() {
        return Err(Error::param(format!(
            "{} keys but {} cumulative alignment values",
            keys.len(),
            cum_align.len()
        )));
    }
    if keys.iter().any(|k| k.len() != p.key_proj.cols) {
        return Err(Error::param(format!("keys must have width {}", p.key_proj.cols)));
    }
    if cum_align.iter().any(|c| !(*c >= 0.0)) {
        return Err(Error::param("cumulative alignment must be nonnegative"));
    }
    let wq = p.query_proj.mul_vec(query);
    let loc = location_features(cum_align, &p.location_conv);
    let energies: Vec<f64> = keys
        .iter()
        .enumerate()
        .map(|(i, key)| {
            let vk = p.key_proj.mul_vec(key);
            let loc_i: Vec<f64> = (0..loc.rows).map(|f| loc.get(f, i)).collect();
            let ul = p.location_proj.mul_vec(&loc_i);
            (0..attn).map(|a| p.score[a] * (wq[a] + vk[a] + ul[a] + p.bias[a]).tanh()).sum()
        })
        .collect();
    Ok(softmax(&energies))
}

/// Alignment-weighted sum of encoder vectors.
pub fn context_vector(row: &[f64], keys: &[Vec<f64>]) -> Result<Vec<f64>> {
    if row.len() != keys.len() || keys.is_empty() {
        return Err(Error::param("alignment row and keys differ in length"));
    }
    let mut out = vec![0.0; keys[0].len()];
    for (w, k) in row.iter().zip(keys) {
        for (o, v) in out.iter_mut().zip(k) {
            *o += w * v;
        }
    }
    Ok(out)
}

/// Monotonic alignment state of forward attention.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardAttnState {
    alpha: Vec<f64>,
}

impl ForwardAttnState {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::param("forward attention needs at least one encoder position"));
        }
        check_row(&alpha).map_err(|reason| Error::Validation { location: "forward attention state".into(), reason })?;
        Ok(Self { alpha })
    }

    /// All mass on the first encoder position.
    pub fn initial(encoder_len: usize) -> Result<Self> {
        let mut alpha = vec![0.0; encoder_len];
        *alpha.first_mut().ok_or_else(|| Error::param("encoder length must be positive"))? = 1.0;
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// `Σ i · α(i)`.
    pub fn expected_position(&self) -> f64 {
        self.alpha.iter().enumerate().map(|(i, a)| i as f64 * a).sum()
    }
}

/// `α'(i) ∝ (α(i) + α(i−1)) · base(i)`.
pub fn forward_attention_step(prev: &ForwardAttnState, base_row: &[f64]) -> Result<ForwardAttnState> {
    if base_row.len() != prev.alpha.len() {
        return Err(Error::param(format!(
            "base row has {} positions, state has {}",
            base_row.len(),
            prev.alpha.len()
        )));
    }
    check_row(base_row).map_err(|reason| Error::Validation { location: "base row".into(), reason })?;
    let mut next: Vec<f64> = (0..base_row.len())
        .map(|i| {
            let shifted = if i > 0 { prev.alpha[i - 1] } else { 0.0 };
            (prev.alpha[i] + shifted) * base_row[i]
        })
        .collect();
    let total: f64 = next.iter().sum();
    if !(total >= FORWARD_UNDERFLOW) {
        return Err(Error::Degenerate(format!("forward attention normalizer {total:e} underflowed")));
    }
    next.iter_mut().for_each(|v| *v /= total);
    Ok(ForwardAttnState { alpha: next })
}

/// One Gaussian of the attention mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmComponent {
    /// Centre in encoder positions.
    pub mean: f64,
    pub width: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmAttnState {
    components: Vec<GmmComponent>,
}

impl GmmAttnState {
    pub fn new(components: Vec<GmmComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::param("GMM attention needs at least one component"));
        }
        if components.iter().any(|c| !c.mean.is_finite() || !(c.width > 0.0) || !(c.weight >= 0.0)) {
            return Err(Error::param("GMM components need finite means, positive widths and nonnegative weights"));
        }
        if !components.iter().any(|c| c.weight > 0.0) {
            return Err(Error::param("at least one GMM weight must be positive"));
        }
        Ok(Self { components })
    }

    /// `k` components at position 0 with unit width and equal weight.
    pub fn initial(k: usize) -> Result<Self> {
        Self::new(vec![GmmComponent { mean: 0.0, width: 1.0, weight: 1.0 / k.max(1) as f64 }; k])
    }

    pub fn components(&self) -> &[GmmComponent] {
        &self.components
    }
}

/// Raw network outputs driving one GMM step, per component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmDeltas {
    pub mean_step: f64,
    pub width: f64,
    pub weight: f64,
}

/// Advances every mean by `softplus(Δ̂)` and returns the new state with its
/// alignment row over `encoder_len` positions.
pub fn gmm_attention_step(
    state: &GmmAttnState,
    deltas: &[GmmDeltas],
    encoder_len: usize,
) -> Result<(GmmAttnState, Vec<f64>)> {
    if deltas.len() != state.components.len() {
        return Err(Error::param(format!(
            "{} deltas for {} components",
            deltas.len(),
            state.components.len()
        )));
    }
    if encoder_len == 0 {
        return Err(Error::param("encoder length must be positive"));
    }
    if deltas.iter().any(|d| d.mean_step.is_nan() || !d.width.is_finite() || !d.weight.is_finite()) {
        return Err(Error::numeric("GMM deltas must be finite"));
    }
    let weights = softmax(&deltas.iter().map(|d| d.weight).collect::<Vec<_>>());
    let components: Vec<GmmComponent> = state
        .components
        .iter()
        .zip(deltas)
        .zip(&weights)
        .map(|((c, d), &weight)| GmmComponent {
            mean: c.mean + softplus(d.mean_step),
            width: softplus(d.width) + GMM_MIN_WIDTH,
            weight,
        })
        .collect();
    if components.iter().any(|c| !c.mean.is_finite()) {
        return Err(Error::numeric("GMM mean overflowed"));
    }
    // Log-domain mixture so narrow components far from the grid do not underflow.
    let log_terms: Vec<f64> = (0..encoder_len)
        .map(|i| {
            let terms: Vec<f64> = components
                .iter()
                .filter(|c| c.weight > 0.0)
                .map(|c| c.weight.ln() - (i as f64 - c.mean).powi(2) / (2.0 * c.width * c.width))
                .collect();
            let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
        })
        .collect();
    let row = softmax(&log_terms);
    Ok((GmmAttnState { components }, row))
}

fn mean_abs_diff(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.rows != b.rows || a.cols != b.cols {
        return Err(Error::param(format!("shape {}x{} differs from {}x{}", a.rows, a.cols, b.rows, b.cols)));
    }
    if a.data.is_empty() {
        return Err(Error::param("loss over an empty matrix"));
    }
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.data.len() as f64)
}

/// `λ · (mean|a − a_f| + mean|a − a_g|)`.
pub fn guidance_loss(a: &AlignmentMatrix, forward: &AlignmentMatrix, gmm: &AlignmentMatrix, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::param(format!("guidance weight {lambda} must be finite and nonnegative")));
    }
    Ok(lambda * (mean_abs_diff(&a.0, &forward.0)? + mean_abs_diff(&a.0, &gmm.0)?))
}

/// Inputs of [`composite_loss`]: decoder outputs under each attention, the
/// post-net output, the target features and the three alignments.
#[derive(Debug, Clone, Copy)]
pub struct LossInputs<'a> {
    pub output: &'a Matrix,
    pub forward_output: &'a Matrix,
    pub gmm_output: &'a Matrix,
    pub postnet: &'a Matrix,
    pub target: &'a Matrix,
    pub alignment: &'a AlignmentMatrix,
    pub forward_alignment: &'a AlignmentMatrix,
    pub gmm_alignment: &'a AlignmentMatrix,
}

/// Four mean-absolute reconstruction terms plus the guidance loss.
pub fn composite_loss(x: &LossInputs<'_>, lambda: f64) -> Result<f64> {
    let mut total = 0.0;
    for out in [x.output, x.forward_output, x.gmm_output, x.postnet] {
        total += mean_abs_diff(out, x.target)?;
    }
    Ok(total + guidance_loss(x.alignment, x.forward_alignment, x.gmm_alignment, lambda)?)
}

/// Alignments from all three mechanisms over the same synthetic sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoAlignments {
    pub location: AlignmentMatrix,
    pub forward: AlignmentMatrix,
    pub gmm: AlignmentMatrix,
    /// Component means after every GMM step.
    pub gmm_means: Vec<Vec<f64>>,
}

/// Runs the three mechanisms on random encoder keys and decoder queries.
/// Forward attention reuses the location-sensitive rows as its base rows.
pub fn demo_alignments(encoder_len: usize, decoder_steps: usize, seed: u64) -> Result<DemoAlignments> {
    if !(1..=MAX_ENCODER_LEN).contains(&encoder_len) || !(1..=MAX_DECODER_LEN).contains(&decoder_steps) {
        return Err(Error::param(format!(
            "attention demo supports 1..={MAX_ENCODER_LEN} encoder positions and 1..={MAX_DECODER_LEN} decoder steps"
        )));
    }
    const WIDTH: usize = 16;
    const COMPONENTS: usize = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keys: Vec<Vec<f64>> =
        (0..encoder_len).map(|_| (0..WIDTH).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let params = LsaParams::random(WIDTH, WIDTH, WIDTH, 0.5, &mut rng);

    let mut cum = vec![0.0; encoder_len];
    let mut fwd = ForwardAttnState::initial(encoder_len)?;
    let mut gmm = GmmAttnState::initial(COMPONENTS)?;
    let (mut lsa_rows, mut fwd_rows, mut gmm_rows, mut gmm_means) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let step = encoder_len as f64 / decoder_steps as f64;
    for _ in 0..decoder_steps {
        let query: Vec<f64> = (0..WIDTH).map(|_| rng.random_range(-1.0..1.0)).collect();
        let row = lsa_score(&query, &keys, &cum, &params)?;
        cum.iter_mut().zip(&row).for_each(|(c, r)| *c += r);
        fwd = forward_attention_step(&fwd, &row)?;
        let deltas: Vec<GmmDeltas> = (0..COMPONENTS)
            .map(|_| GmmDeltas {
                // softplus⁻¹ of the average advance, jittered.
                mean_step: step.exp_m1().ln() + rng.random_range(-0.5..0.5),
                width: rng.random_range(0.0..1.0),
                weight: rng.random_range(-1.0..1.0),
            })
            .collect();
        let (next, grow) = gmm_attention_step(&gmm, &deltas, encoder_len)?;
        gmm = next;
        gmm_means.push(gmm.components().iter().map(|c| c.mean).collect());
        lsa_rows.push(row);
        fwd_rows.push(fwd.alpha().to_vec());
        gmm_rows.push(grow);
    }
    Ok(DemoAlignments {
        location: AlignmentMatrix::from_rows(&lsa_rows)?,
        forward: AlignmentMatrix::from_rows(&fwd_rows)?,
        gmm: AlignmentMatrix::from_rows(&gmm_rows)?,
        gmm_means,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::{prop_assert, proptest};

    fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        let v: Vec<f64> = (0..n).map(|_| -rng.random_range(1e-12..1.0f64).ln()).collect();
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    }

    /// Scalar evaluation with explicit loops and index bounds.
    fn lsa_reference(query: &[f64], keys: &[Vec<f64>], cum: &[f64], p: &LsaParams) -> Vec<f64> {
        let n = keys.len();
        let mut e = vec![0.0; n];
        for i in 0..n {
            let mut loc = [0.0; LOCATION_FILTERS];
            for (f, l) in loc.iter_mut().enumerate() {
                for k in 0..LOCATION_KERNEL {
                    let j = i as isize + k as isize - 15;
                    if j >= 0 && (j as usize) < n {
                        *l += p.location_conv.get(f, k) * cum[j as usize];
                    }
                }
            }
            for a in 0..p.bias.len() {
                let mut z = p.bias[a];
                for (q, v) in query.iter().enumerate() {
                    z += p.query_proj.get(a, q) * v;
                }
                for (c, v) in keys[i].iter().enumerate() {
                    z += p.key_proj.get(a, c) * v;
                }
                for (f, l) in loc.iter().enumerate() {
                    z += p.location_proj.get(a, f) * l;
                }
                e[i] += p.score[a] * z.tanh();
            }
        }
        let denom: f64 = e.iter().map(|v| v.exp()).sum();
        e.iter().map(|v| v.exp() / denom).collect()
    }

    #[test]
    fn lsa_uniform_for_zero_params() {
        let keys = vec![vec![0.3; 4]; 5];
        let row = lsa_score(&[1.0; 3], &keys, &[0.0; 5], &LsaParams::zeros(6, 3, 4)).unwrap();
        assert!(row.iter().all(|v| (v - 0.2).abs() < 1e-12));
    }

    #[test]
    fn lsa_saturates_on_biased_key() {
        let mut p = LsaParams::zeros(1, 2, 2);
        p.key_proj = Matrix::new(1, 2, vec![1.0, 0.0]).unwrap();
        p.score = vec![100.0];
        let mut keys = vec![vec![0.0, 0.0]; 6];
        keys[3] = vec![10.0, 0.0];
        let row = lsa_score(&[0.0, 0.0], &keys, &[0.0; 6], &p).unwrap();
        assert!(row[3] > 0.999);
    }

    #[test]
    fn lsa_matches_scalar_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let p = LsaParams::random(8, 5, 6, 0.7, &mut rng);
            let keys: Vec<Vec<f64>> = (0..7).map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let q: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let cum: Vec<f64> = (0..7).map(|_| rng.random_range(0.0..2.0)).collect();
            let got = lsa_score(&q, &keys, &cum, &p).unwrap();
            for (a, b) in got.iter().zip(lsa_reference(&q, &keys, &cum, &p)) {
                assert!((a - b).abs() < 1e-6);
            }
            check_row(&got).unwrap();
        }
    }

    #[test]
    fn lsa_rejects_bad_shapes() {
        let p = LsaParams::zeros(4, 3, 2);
        assert!(lsa_score(&[0.0; 2], &[vec![0.0; 2]], &[0.0], &p).is_err());
        assert!(lsa_score(&[0.0; 3], &[vec![0.0; 2]], &[0.0, 0.0], &p).is_err());
        assert!(lsa_score(&[0.0; 3], &[vec![0.0; 2]], &[-1.0], &p).is_err());
    }

    #[test]
    fn context_is_weighted_sum() {
        let keys = vec![vec![1.0, 0.0], vec![0.0, 2.0]];
        assert_eq!(context_vector(&[0.25, 0.75], &keys).unwrap(), vec![0.25, 1.5]);
    }

    #[test]
    fn forward_two_term_recursion() {
        let s = ForwardAttnState::initial(5).unwrap();
        let next = forward_attention_step(&s, &[0.2; 5]).unwrap();
        assert_eq!(next.alpha(), &[0.5, 0.5, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn forward_absorbing_base() {
        let s = ForwardAttnState::new(vec![0.0, 0.4, 0.6, 0.0]).unwrap();
        let next = forward_attention_step(&s, &[0.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(next.alpha(), &[0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn forward_underflow_is_degenerate() {
        let s = ForwardAttnState::initial(4).unwrap();
        let err = forward_attention_step(&s, &[0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(err, Err(Error::Degenerate(_))));
    }

    #[test]
    fn forward_support_moves_at_most_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let mut s = ForwardAttnState::initial(10).unwrap();
            for _ in 0..50 {
                let base = random_simplex(&mut rng, 10);
                let next = forward_attention_step(&s, &base).unwrap();
                check_row(next.alpha()).unwrap();
                for i in 0..10 {
                    if next.alpha()[i] > 0.0 {
                        assert!(s.alpha()[i] > 0.0 || (i > 0 && s.alpha()[i - 1] > 0.0));
                    }
                }
                s = next;
            }
        }
    }

    #[test]
    fn forward_front_never_retreats() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let last = |s: &ForwardAttnState| s.alpha().iter().rposition(|&a| a > 0.0).unwrap();
        let mut s = ForwardAttnState::initial(10).unwrap();
        for _ in 0..50 {
            let next = forward_attention_step(&s, &random_simplex(&mut rng, 10)).unwrap();
            assert!(last(&next) >= last(&s));
            s = next;
        }
    }

    /// Naive per-index mixture with the parameter mapping written out.
    fn gmm_reference(prev: &GmmAttnState, d: &[GmmDeltas], n: usize) -> Vec<f64> {
        let zmax = d.iter().map(|x| x.weight).fold(f64::MIN, f64::max);
        let z: f64 = d.iter().map(|x| (x.weight - zmax).exp()).sum();
        let mut row = vec![0.0; n];
        for (c, x) in prev.components().iter().zip(d) {
            let mu = c.mean + (1.0 + x.mean_step.exp()).ln();
            let sigma = (1.0 + x.width.exp()).ln() + 1e-3;
            let rho = (x.weight - zmax).exp() / z;
            for (i, r) in row.iter_mut().enumerate() {
                *r += rho * (-(i as f64 - mu).powi(2) / (2.0 * sigma * sigma)).exp();
            }
        }
        let s: f64 = row.iter().sum();
        row.into_iter().map(|v| v / s).collect()
    }

    #[test]
    fn gmm_peak_at_mean() {
        let s = GmmAttnState::new(vec![GmmComponent { mean: 2.0 - 2f64.ln(), width: 1.0, weight: 1.0 }]).unwrap();
        // softplus(0) = ln 2, so the new mean is exactly 2.
        let (next, row) =
            gmm_attention_step(&s, &[GmmDeltas { mean_step: 0.0, width: -5.0, weight: 0.0 }], 5).unwrap();
        assert!((next.components()[0].mean - 2.0).abs() < 1e-12);
        let argmax = row.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(argmax, 2);
    }

    #[test]
    fn gmm_negative_infinite_step_keeps_mean() {
        let s = GmmAttnState::initial(1).unwrap();
        let (next, _) =
            gmm_attention_step(&s, &[GmmDeltas { mean_step: f64::NEG_INFINITY, width: 0.0, weight: 0.0 }], 4).unwrap();
        assert!(next.components()[0].mean.abs() < 1e-6);
    }

    #[test]
    fn gmm_matches_naive_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let comps = (0..3)
                .map(|_| GmmComponent {
                    mean: rng.random_range(0.0..6.0),
                    width: rng.random_range(0.5..2.0),
                    weight: 1.0 / 3.0,
                })
                .collect();
            let s = GmmAttnState::new(comps).unwrap();
            let d: Vec<GmmDeltas> = (0..3)
                .map(|_| GmmDeltas {
                    mean_step: rng.random_range(-2.0..2.0),
                    width: rng.random_range(-1.0..2.0),
                    weight: rng.random_range(-2.0..2.0),
                })
                .collect();
            let (_, row) = gmm_attention_step(&s, &d, 12).unwrap();
            for (a, b) in row.iter().zip(gmm_reference(&s, &d, 12)) {
                assert!((a - b).abs() < 1e-9);
            }
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gmm_state_validation() {
        assert!(GmmAttnState::new(vec![]).is_err());
        assert!(GmmAttnState::new(vec![GmmComponent { mean: 0.0, width: 0.0, weight: 1.0 }]).is_err());
        assert!(GmmAttnState::new(vec![GmmComponent { mean: 0.0, width: 1.0, weight: 0.0 }]).is_err());
    }

    fn random_alignment(rng: &mut ChaCha8Rng, t: usize, l: usize) -> AlignmentMatrix {
        let rows: Vec<Vec<f64>> = (0..t).map(|_| random_simplex(rng, l)).collect();
        AlignmentMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn guidance_loss_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_alignment(&mut rng, 6, 4);
        assert_eq!(guidance_loss(&a, &a, &a, 10.0).unwrap(), 0.0);
        let f = random_alignment(&mut rng, 6, 4);
        let g = random_alignment(&mut rng, 6, 4);
        let one = guidance_loss(&a, &f, &g, 1.0).unwrap();
        assert_eq!(guidance_loss(&a, &f, &g, 10.0).unwrap(), 10.0 * one);
        assert!(guidance_loss(&a, &f, &g, -1.0).is_err());
        let other = random_alignment(&mut rng, 5, 4);
        assert!(guidance_loss(&a, &other, &g, 1.0).is_err());
    }

    #[test]
    fn guidance_loss_hand_value() {
        let a = AlignmentMatrix::from_rows(&[vec![0.6, 0.4], vec![0.3, 0.7]]).unwrap();
        let f = AlignmentMatrix::from_rows(&[vec![0.5, 0.5], vec![0.4, 0.6]]).unwrap();
        let loss = guidance_loss(&a, &f, &f, 3.0).unwrap();
        assert!((loss - 3.0 * 0.2).abs() < 1e-12);
    }

    #[test]
    fn composite_loss_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let r = Matrix::from_fn(4, 3, |_, _| rng.random_range(-1.0..1.0));
        let a = random_alignment(&mut rng, 4, 5);
        let base = LossInputs {
            output: &r,
            forward_output: &r,
            gmm_output: &r,
            postnet: &r,
            target: &r,
            alignment: &a,
            forward_alignment: &a,
            gmm_alignment: &a,
        };
        assert_eq!(composite_loss(&base, 10.0).unwrap(), 0.0);
        let shifted = Matrix::from_fn(4, 3, |i, j| r.get(i, j) - 0.25);
        let one = LossInputs { output: &shifted, ..base };
        assert!((composite_loss(&one, 10.0).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn composite_loss_matches_naive_sum_and_swap() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut m = || Matrix::from_fn(3, 4, |_, _| rng.random_range(-1.0..1.0));
        let (o, of, og, p, r) = (m(), m(), m(), m(), m());
        let mut rng = ChaCha8Rng::seed_from_u64(70);
        let (a, af, ag) = (random_alignment(&mut rng, 3, 5), random_alignment(&mut rng, 3, 5), random_alignment(&mut rng, 3, 5));
        let x = LossInputs {
            output: &o,
            forward_output: &of,
            gmm_output: &og,
            postnet: &p,
            target: &r,
            alignment: &a,
            forward_alignment: &af,
            gmm_alignment: &ag,
        };
        let mut naive = 0.0;
        for out in [&o, &of, &og, &p] {
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..4 {
                    s += (out.get(i, j) - r.get(i, j)).abs();
                }
            }
            naive += s / 12.0;
        }
        let mut g = 0.0;
        for guide in [&af, &ag] {
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..5 {
                    s += (a.row(i)[j] - guide.row(i)[j]).abs();
                }
            }
            g += s / 15.0;
        }
        naive += 10.0 * g;
        let got = composite_loss(&x, 10.0).unwrap();
        assert!((got - naive).abs() < 1e-9);
        let swapped = LossInputs { output: &of, forward_output: &o, ..x };
        assert_eq!(composite_loss(&swapped, 10.0).unwrap(), got);
    }

    #[test]
    fn demo_rows_are_simplex() {
        let d = demo_alignments(12, 40, 1).unwrap();
        for m in [&d.location, &d.forward, &d.gmm] {
            assert_eq!((m.decoder_steps(), m.encoder_len()), (40, 12));
        }
        assert!(demo_alignments(65, 10, 0).is_err());
        assert!(demo_alignments(10, 257, 0).is_err());
    }

    proptest! {
        #[test]
        fn gmm_means_strictly_increase(steps in proptest::collection::vec(-20.0f64..20.0, 1..30)) {
            let mut s = GmmAttnState::initial(2).unwrap();
            for d in steps {
                let deltas = [GmmDeltas { mean_step: d, width: 0.0, weight: 0.0 }; 2];
                let (next, row) = gmm_attention_step(&s, &deltas, 16).unwrap();
                for (a, b) in next.components().iter().zip(s.components()) {
                    prop_assert!(a.mean > b.mean);
                }
                prop_assert!(check_row(&row).is_ok());
                s = next;
            }
        }

        #[test]
        fn softmax_is_simplex(x in proptest::collection::vec(-50.0f64..50.0, 1..40)) {
            prop_assert!(check_row(&softmax(&x)).is_ok());
        }
    }
}
