//! Inference kernels for the sample-rate network.
//!
//! All arithmetic is `f32`. Dense matrices are stored column-major so that
//! matrix-vector products run as a sequence of vectorisable AXPYs; sparse
//! matrices use 16×1 blocks (16 consecutive rows of one column).

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::features::{MuLawIndex, MULAW_LEVELS};

/// Rows per sparse block.
pub const BLOCK_ROWS: usize = 16;
/// Row tile of the dense product.
const GEMV_TILE: usize = 16;
/// Probabilities summed per chunk when sampling.
const SAMPLE_CHUNK: usize = 16;

/// Below this temperature sampling degenerates to argmax.
pub const ARGMAX_TEMPERATURE: f32 = 1e-6;

/// Runs `f` from a function compiled for AVX2 when the CPU has it, so the
/// `#[inline(always)]` kernels inlined into `f` vectorise eight lanes wide.
/// FMA stays off: every element sees the same IEEE operations in the same
/// order, so results are bit-identical with or without AVX2.
#[inline(always)]
pub(crate) fn vectorized<T>(f: impl FnOnce() -> T) -> T {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: AVX2 support was checked just above.
        return unsafe { run_avx2(f) };
    }
    f()
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
fn run_avx2<T>(f: impl FnOnce() -> T) -> T {
    f()
}

/// `eˣ` to a few ulp, branch-free so loops over it vectorise.
/// Inputs are clamped so the result stays a normal `f32`.
#[inline(always)]
pub fn exp_approx(x: f32) -> f32 {
    // Round-to-nearest by adding 1.5·2²³; the integer lands in the low mantissa bits.
    const SHIFTER: f32 = 12_582_912.0;
    // ln 2 split so that `n · LN2_HI` is exact for |n| ≤ 127.
    const LN2_HI: f32 = 0.693_359_4;
    const LN2_LO: f32 = -2.121_944_4e-4;
    let x = x.clamp(-87.3, 88.0);
    let t = x * std::f32::consts::LOG2_E + SHIFTER;
    let n = (t.to_bits() as i32).wrapping_sub(SHIFTER.to_bits() as i32);
    let nf = t - SHIFTER;
    let r = x - nf * LN2_HI - nf * LN2_LO;
    // eʳ on [−ln2/2, ln2/2] as 1 + r + r²·P(r).
    let p = 1.987_569_1e-4_f32;
    let p = p * r + 1.398_2e-3;
    let p = p * r + 8.333_452e-3;
    let p = p * r + 4.166_579_6e-2;
    let p = p * r + 1.666_666_5e-1;
    let p = p * r + 5.0e-1;
    let e = p * r * r + r + 1.0;
    e * f32::from_bits((n.wrapping_add(127) as u32) << 23)
}

#[inline(always)]
pub fn tanh_approx(x: f32) -> f32 {
    // Clamp keeps e^{2x} finite; tanh(±10) is ±1 in f32.
    let e = exp_approx(2.0 * x.clamp(-10.0, 10.0));
    (e - 1.0) / (e + 1.0)
}

#[inline(always)]
pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + exp_approx(-x))
}

/// Column-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Builds from row-major values.
    pub fn from_row_major(rows: usize, cols: usize, values: &[f32]) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::param(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        Ok(Self::from_fn(rows, cols, |r, c| values[r * cols + c]))
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for c in 0..cols {
            for r in 0..rows {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| if r == c { 1.0 } else { 0.0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[col * self.rows + row]
    }

    pub fn column(&self, col: usize) -> &[f32] {
        &self.data[col * self.rows..(col + 1) * self.rows]
    }

    pub fn to_row_major(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.data.len());
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.push(self.get(r, c));
            }
        }
        out
    }

    /// `out += self · x`, no shape checks. Rows are processed in tiles of
    /// [`GEMV_TILE`] so the partial sums stay in registers across columns.
    #[inline(always)]
    pub(crate) fn gemv_acc(&self, x: &[f32], out: &mut [f32]) {
        let rows = self.rows;
        let tiled = rows - rows % GEMV_TILE;
        for r0 in (0..tiled).step_by(GEMV_TILE) {
            let mut acc = [0f32; GEMV_TILE];
            for (col, &xv) in self.data.chunks_exact(rows).zip(x) {
                let tile: &[f32; GEMV_TILE] = col[r0..r0 + GEMV_TILE].try_into().expect("tile in range");
                for (a, &m) in acc.iter_mut().zip(tile) {
                    *a += m * xv;
                }
            }
            for (o, a) in out[r0..r0 + GEMV_TILE].iter_mut().zip(acc) {
                *o += a;
            }
        }
        if tiled < rows {
            for (col, &xv) in self.data.chunks_exact(rows).zip(x) {
                for (o, &m) in out[tiled..rows].iter_mut().zip(&col[tiled..]) {
                    *o += m * xv;
                }
            }
        }
    }

    fn check_gemv(&self, x: &[f32]) -> Result<()> {
        if x.len() != self.cols {
            return Err(Error::param(format!(
                "matrix has {} columns but vector has {} entries",
                self.cols,
                x.len()
            )));
        }
        Ok(())
    }
}

pub fn gemv_dense(m: &DenseMatrix, x: &[f32]) -> Result<Vec<f32>> {
    m.check_gemv(x)?;
    let mut out = vec![0.0; m.rows];
    m.gemv_acc(x, &mut out);
    Ok(out)
}

/// One 16×1 block: rows `16·row_block .. 16·row_block + 16` of column `col`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparseBlock {
    pub row_block: usize,
    pub col: usize,
    pub values: [f32; BLOCK_ROWS],
}

/// Block-sparse matrix in block-CSR layout.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSparseMatrix {
    rows: usize,
    cols: usize,
    /// `row_ptr[rb]..row_ptr[rb + 1]` indexes the blocks of row block `rb`.
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<[f32; BLOCK_ROWS]>,
}

impl BlockSparseMatrix {
    pub fn new(rows: usize, cols: usize, mut blocks: Vec<SparseBlock>) -> Result<Self> {
        if rows == 0 || cols == 0 || !rows.is_multiple_of(BLOCK_ROWS) {
            return Err(Error::param(format!(
                "block-sparse shape {rows}x{cols} must be nonzero with rows divisible by {BLOCK_ROWS}"
            )));
        }
        let row_blocks = rows / BLOCK_ROWS;
        if let Some(b) = blocks.iter().find(|b| b.row_block >= row_blocks || b.col >= cols) {
            return Err(Error::param(format!(
                "block ({}, {}) outside {rows}x{cols} matrix",
                b.row_block, b.col
            )));
        }
        blocks.sort_by_key(|b| (b.row_block, b.col));
        if let Some(w) = blocks.windows(2).find(|w| w[0].row_block == w[1].row_block && w[0].col == w[1].col) {
            return Err(Error::param(format!("duplicate block ({}, {})", w[0].row_block, w[0].col)));
        }
        let mut row_ptr = vec![0usize; row_blocks + 1];
        for b in &blocks {
            row_ptr[b.row_block + 1] += 1;
        }
        for i in 0..row_blocks {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col_idx = blocks.iter().map(|b| b.col as u32).collect();
        let values = blocks.into_iter().map(|b| b.values).collect();
        Ok(Self { rows, cols, row_ptr, col_idx, values })
    }

    /// Random matrix with `round(density · blocks)` distinct blocks.
    pub fn random<R: Rng + ?Sized>(rows: usize, cols: usize, density: f64, scale: f32, rng: &mut R) -> Result<Self> {
        if !rows.is_multiple_of(BLOCK_ROWS) || !(0.0..=1.0).contains(&density) {
            return Err(Error::param(format!("invalid random block-sparse request {rows}x{cols} @ {density}")));
        }
        let total = rows / BLOCK_ROWS * cols;
        let count = (density * total as f64).round() as usize;
        let blocks = sample(rng, total, count)
            .into_iter()
            .map(|i| {
                let mut values = [0.0; BLOCK_ROWS];
                values.iter_mut().for_each(|v| *v = rng.random_range(-scale..=scale));
                SparseBlock { row_block: i / cols, col: i % cols, values }
            })
            .collect();
        Self::new(rows, cols, blocks)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn num_blocks(&self) -> usize {
        self.values.len()
    }

    /// Fraction of stored weights, `blocks·16 / (rows·cols)`.
    pub fn density(&self) -> f64 {
        (self.num_blocks() * BLOCK_ROWS) as f64 / (self.rows * self.cols) as f64
    }

    /// Blocks in (row_block, col) order.
    pub fn blocks(&self) -> impl Iterator<Item = SparseBlock> + '_ {
        (0..self.rows / BLOCK_ROWS).flat_map(move |rb| {
            (self.row_ptr[rb]..self.row_ptr[rb + 1]).map(move |i| SparseBlock {
                row_block: rb,
                col: self.col_idx[i] as usize,
                values: self.values[i],
            })
        })
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut dense = DenseMatrix::zeros(self.rows, self.cols);
        for b in self.blocks() {
            for (i, v) in b.values.iter().enumerate() {
                dense.data[b.col * self.rows + b.row_block * BLOCK_ROWS + i] = *v;
            }
        }
        dense
    }

    #[inline(always)]
    pub(crate) fn gemv_acc(&self, x: &[f32], out: &mut [f32]) {
        for (rb, chunk) in out.chunks_exact_mut(BLOCK_ROWS).enumerate() {
            let mut acc = [0f32; BLOCK_ROWS];
            let range = self.row_ptr[rb]..self.row_ptr[rb + 1];
            for (&col, vals) in self.col_idx[range.clone()].iter().zip(&self.values[range]) {
                let xv = x[col as usize];
                for (a, v) in acc.iter_mut().zip(vals) {
                    *a += v * xv;
                }
            }
            for (o, a) in chunk.iter_mut().zip(acc) {
                *o += a;
            }
        }
    }
}

pub fn gemv_block_sparse(m: &BlockSparseMatrix, x: &[f32]) -> Result<Vec<f32>> {
    if x.len() != m.cols {
        return Err(Error::param(format!(
            "matrix has {} columns but vector has {} entries",
            m.cols,
            x.len()
        )));
    }
    let mut out = vec![0.0; m.rows];
    m.gemv_acc(x, &mut out);
    Ok(out)
}

/// Recurrent weight matrix of a GRU, `3H × H`, gates stacked as
/// `[update; reset; candidate]`.
#[derive(Debug, Clone, PartialEq)]
pub enum RecurrentWeights {
    Dense(DenseMatrix),
    Sparse(BlockSparseMatrix),
}

impl RecurrentWeights {
    pub fn rows(&self) -> usize {
        match self {
            Self::Dense(m) => m.rows(),
            Self::Sparse(m) => m.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Self::Dense(m) => m.cols(),
            Self::Sparse(m) => m.cols(),
        }
    }

    /// Multiply-accumulates per product.
    pub fn macs(&self) -> usize {
        match self {
            Self::Dense(m) => m.rows() * m.cols(),
            Self::Sparse(m) => m.num_blocks() * BLOCK_ROWS,
        }
    }

    #[inline(always)]
    fn gemv_acc(&self, x: &[f32], out: &mut [f32]) {
        match self {
            Self::Dense(m) => m.gemv_acc(x, out),
            Self::Sparse(m) => m.gemv_acc(x, out),
        }
    }
}

/// GRU parameters. Input contributions are supplied already multiplied
/// out (by an embedding lookup or a separate dense product).
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub recurrent: RecurrentWeights,
    /// Gate biases `[b_z; b_r; b_h]`.
    pub bias: Vec<f32>,
}

impl GruParams {
    pub fn new(recurrent: RecurrentWeights, bias: Vec<f32>) -> Result<Self> {
        let h = recurrent.cols();
        if recurrent.rows() != 3 * h || bias.len() != 3 * h {
            return Err(Error::param(format!(
                "GRU of size {h} needs a {}x{h} recurrent matrix and {} biases, got {}x{} and {}",
                3 * h,
                3 * h,
                recurrent.rows(),
                recurrent.cols(),
                bias.len()
            )));
        }
        Ok(Self { recurrent, bias })
    }

    pub fn hidden(&self) -> usize {
        self.recurrent.cols()
    }
}

/// In-place GRU update. `scratch` must hold `3H` values.
#[inline(always)]
pub(crate) fn gru_update(h: &mut [f32], input: &[f32], p: &GruParams, scratch: &mut [f32]) {
    let n = h.len();
    // The candidate row starts from zero so the reset gate scales R_h·h alone.
    scratch[..2 * n].copy_from_slice(&p.bias[..2 * n]);
    scratch[2 * n..].fill(0.0);
    p.recurrent.gemv_acc(h, scratch);
    let (rz, rest) = scratch.split_at(n);
    let (rr, rh) = rest.split_at(n);
    let (iz, rest) = input.split_at(n);
    let (ir, ih) = rest.split_at(n);
    let bh = &p.bias[2 * n..3 * n];
    let (rz, rr, rh) = (&rz[..n], &rr[..n], &rh[..n]);
    let (iz, ir, ih) = (&iz[..n], &ir[..n], &ih[..n]);
    for i in 0..n {
        let z = sigmoid(iz[i] + rz[i]);
        let r = sigmoid(ir[i] + rr[i]);
        let cand = tanh_approx(ih[i] + r * rh[i] + bh[i]);
        h[i] = (1.0 - z) * h[i] + z * cand;
    }
}

/// Standard GRU step: `input` holds the pre-multiplied gate inputs `[i_z; i_r; i_h]`.
pub fn gru_cell(h_prev: &[f32], input: &[f32], p: &GruParams) -> Result<Vec<f32>> {
    let n = p.hidden();
    if h_prev.len() != n || input.len() != 3 * n {
        return Err(Error::param(format!(
            "GRU of size {n} got state of {} and input of {}",
            h_prev.len(),
            input.len()
        )));
    }
    let mut h = h_prev.to_vec();
    let mut scratch = vec![0.0; 3 * n];
    gru_update(&mut h, input, p, &mut scratch);
    Ok(h)
}

/// `a1 ⊙ tanh(W1·x) + a2 ⊙ tanh(W2·x) + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualFcParams {
    pub w1: DenseMatrix,
    pub w2: DenseMatrix,
    pub a1: Vec<f32>,
    pub a2: Vec<f32>,
    pub b: Vec<f32>,
}

impl DualFcParams {
    pub fn new(w1: DenseMatrix, w2: DenseMatrix, a1: Vec<f32>, a2: Vec<f32>, b: Vec<f32>) -> Result<Self> {
        let q = w1.rows();
        if w2.rows() != q || w2.cols() != w1.cols() || a1.len() != q || a2.len() != q || b.len() != q {
            return Err(Error::param("dual FC parameter shapes disagree"));
        }
        Ok(Self { w1, w2, a1, a2, b })
    }

    pub fn inputs(&self) -> usize {
        self.w1.cols()
    }

    pub fn outputs(&self) -> usize {
        self.w1.rows()
    }
}

/// `scratch` must hold `2Q` values.
#[inline(always)]
pub(crate) fn dual_fc_into(x: &[f32], p: &DualFcParams, out: &mut [f32], scratch: &mut [f32]) {
    let q = p.outputs();
    let (s1, s2) = scratch.split_at_mut(q);
    s1.fill(0.0);
    s2.fill(0.0);
    p.w1.gemv_acc(x, s1);
    p.w2.gemv_acc(x, s2);
    let out = &mut out[..q];
    let (a1, a2, b) = (&p.a1[..q], &p.a2[..q], &p.b[..q]);
    for i in 0..q {
        out[i] = a1[i] * tanh_approx(s1[i]) + a2[i] * tanh_approx(s2[i]) + b[i];
    }
}

pub fn dual_fc(x: &[f32], p: &DualFcParams) -> Result<Vec<f32>> {
    if x.len() != p.inputs() {
        return Err(Error::param(format!("dual FC expects {} inputs, got {}", p.inputs(), x.len())));
    }
    let mut out = vec![0.0; p.outputs()];
    let mut scratch = vec![0.0; 2 * p.outputs()];
    dual_fc_into(x, p, &mut out, &mut scratch);
    Ok(out)
}

/// 256 precomputed input contributions for one μ-law-coded input.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    width: usize,
    data: Vec<f32>,
}

impl EmbeddingTable {
    pub fn new(width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != MULAW_LEVELS * width {
            return Err(Error::param(format!(
                "embedding table of width {width} needs {} values, got {}",
                MULAW_LEVELS * width,
                data.len()
            )));
        }
        Ok(Self { width, data })
    }

    pub fn zeros(width: usize) -> Self {
        Self { width, data: vec![0.0; MULAW_LEVELS * width] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, index: MuLawIndex) -> &[f32] {
        let i = index.get();
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
}

/// Named embedding tables, one per GRU-A input role.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingSet {
    names: Vec<String>,
    tables: Vec<EmbeddingTable>,
    lookup: HashMap<String, usize>,
}

impl EmbeddingSet {
    pub fn new(entries: Vec<(String, EmbeddingTable)>) -> Result<Self> {
        let mut set = Self::default();
        for (name, table) in entries {
            if let Some(first) = set.tables.first() {
                if first.width() != table.width() {
                    return Err(Error::param(format!("embedding '{name}' width differs from the others")));
                }
            }
            if set.lookup.insert(name.clone(), set.tables.len()).is_some() {
                return Err(Error::param(format!("duplicate embedding role '{name}'")));
            }
            set.names.push(name);
            set.tables.push(table);
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn width(&self) -> usize {
        self.tables.first().map_or(0, EmbeddingTable::width)
    }

    pub fn role_index(&self, role: &str) -> Option<usize> {
        self.lookup.get(role).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &EmbeddingTable)> {
        self.names.iter().map(String::as_str).zip(&self.tables)
    }

    #[inline]
    pub(crate) fn accumulate(&self, role: usize, index: MuLawIndex, out: &mut [f32]) {
        for (o, v) in out.iter_mut().zip(self.tables[role].row(index)) {
            *o += v;
        }
    }

    /// Adds every selected row to `out`, in `picks` order per element.
    /// Walking all rows one column chunk at a time overlaps their memory
    /// fetches, which matters once the tables outgrow the cache.
    #[inline(always)]
    pub(crate) fn accumulate_rows(&self, picks: &[(usize, MuLawIndex)], out: &mut [f32]) {
        const GROUP: usize = 32;
        const CHUNK: usize = 64;
        for group in picks.chunks(GROUP) {
            let mut rows: [&[f32]; GROUP] = [&[]; GROUP];
            for (r, &(role, index)) in rows.iter_mut().zip(group) {
                *r = self.tables[role].row(index);
            }
            let rows = &rows[..group.len()];
            for (c, chunk) in out.chunks_mut(CHUNK).enumerate() {
                let span = c * CHUNK..c * CHUNK + chunk.len();
                for row in rows {
                    for (o, v) in chunk.iter_mut().zip(&row[span.clone()]) {
                        *o += v;
                    }
                }
            }
        }
    }
}

/// Sums the table rows selected by each `(role, index)` pair.
pub fn embed_lookup_sum(indices: &[(&str, MuLawIndex)], tables: &EmbeddingSet) -> Result<Vec<f32>> {
    let mut out = vec![0.0; tables.width()];
    for &(role, index) in indices {
        let r = tables
            .role_index(role)
            .ok_or_else(|| Error::param(format!("no embedding table for role '{role}'")))?;
        tables.accumulate(r, index, &mut out);
    }
    Ok(out)
}

/// Index of the largest logit. Ties go to the index whose μ-law value is
/// closest to zero, then to the lowest index.
pub fn argmax_logit(logits: &[f32]) -> usize {
    let center = MuLawIndex::ZERO.get();
    let mut best = 0;
    for (i, &l) in logits.iter().enumerate().skip(1) {
        let b = logits[best];
        if l > b || (l == b && i.abs_diff(center) < best.abs_diff(center)) {
            best = i;
        }
    }
    best
}

/// Draws an excitation code from `softmax(logits / temperature)` by inverse CDF.
pub fn sample_categorical<R: RngCore + ?Sized>(logits: &[f32], temperature: f32, rng: &mut R) -> Result<MuLawIndex> {
    if logits.len() != MULAW_LEVELS {
        return Err(Error::param(format!("expected {MULAW_LEVELS} logits, got {}", logits.len())));
    }
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::numeric("non-finite logit"));
    }
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::param(format!("temperature {temperature} must be positive")));
    }
    Ok(MuLawIndex::new(sample_index(logits, temperature, rng)).expect("index below 256"))
}

#[inline(always)]
pub(crate) fn sample_index<R: RngCore + ?Sized>(logits: &[f32], temperature: f32, rng: &mut R) -> usize {
    if temperature < ARGMAX_TEMPERATURE {
        return argmax_logit(logits);
    }
    // Lane-wise max and chunked sums keep the dependency chains short.
    let mut lanes = [f32::NEG_INFINITY; 8];
    for chunk in logits.chunks_exact(8) {
        for (m, &l) in lanes.iter_mut().zip(chunk) {
            *m = if l > *m { l } else { *m };
        }
    }
    let max = lanes.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let inv_t = 1.0 / temperature;
    let mut probs = [0f32; MULAW_LEVELS];
    for (p, &l) in probs.iter_mut().zip(logits) {
        *p = exp_approx((l - max) * inv_t);
    }
    let mut sums = [0f32; MULAW_LEVELS / SAMPLE_CHUNK];
    for (s, chunk) in sums.iter_mut().zip(probs.chunks_exact(SAMPLE_CHUNK)) {
        *s = chunk.iter().sum();
    }
    let total: f32 = sums.iter().sum();
    let target = rng.random::<f32>() * total;
    let mut cum = 0f32;
    for (c, &s) in sums.iter().enumerate() {
        if target < cum + s {
            for (i, p) in probs[c * SAMPLE_CHUNK..(c + 1) * SAMPLE_CHUNK].iter().enumerate() {
                cum += p;
                if target < cum {
                    return c * SAMPLE_CHUNK + i;
                }
            }
            break;
        }
        cum += s;
    }
    // Rounding left `target` at the very top; return the last index with mass.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}
