use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::frn::{Conv1d, DenseLayer, FrnParams, FRN_CONV_WIDTH};
use crate::error::{Error, Result};
use crate::features::{MULAW_LEVELS, NB_FEATURES};
use crate::neuralops::{
    BlockSparseMatrix, DenseMatrix, DualFcParams, EmbeddingSet, EmbeddingTable, GruParams, RecurrentWeights,
};
use crate::FRAME_SIZE;

/// Which sample-rate loop a set of weights drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Baseline,
    Mmt,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Baseline => "baseline",
            Mode::Mmt => "mmt",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Mode::Baseline),
            "mmt" => Ok(Mode::Mmt),
            other => Err(Error::param(format!("unknown mode '{other}' (expected baseline or mmt)"))),
        }
    }
}

/// Network dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub gru_a: usize,
    pub gru_b: usize,
    /// Output alphabet size; fixed by the 8-bit μ-law codec.
    pub levels: usize,
    pub bands: usize,
    pub time_span: usize,
    /// FRN convolution channels.
    pub frn_channels: usize,
    /// Condition vector width.
    pub cond: usize,
}

impl ModelConfig {
    /// G_A = 384, G_B = 16, Q = 256, 4 bands × 2 time steps.
    pub const MMT: ModelConfig =
        ModelConfig { gru_a: 384, gru_b: 16, levels: 256, bands: 4, time_span: 2, frn_channels: 128, cond: 128 };

    pub const BASELINE: ModelConfig = ModelConfig { bands: 1, time_span: 1, ..Self::MMT };

    pub fn for_mode(mode: Mode) -> Self {
        match mode {
            Mode::Baseline => Self::BASELINE,
            Mode::Mmt => Self::MMT,
        }
    }

    /// Samples produced per SRN forward pass.
    pub fn samples_per_step(&self) -> usize {
        self.bands * self.time_span
    }

    pub fn steps_per_frame(&self) -> usize {
        FRAME_SIZE / self.samples_per_step()
    }

    pub fn heads(&self) -> usize {
        self.samples_per_step()
    }

    pub fn validate(&self, mode: Mode) -> Result<()> {
        let positive = [self.gru_a, self.gru_b, self.bands, self.time_span, self.frn_channels, self.cond];
        if positive.contains(&0) {
            return Err(Error::param("model dimensions must be positive"));
        }
        if self.levels != MULAW_LEVELS {
            return Err(Error::param(format!("output alphabet must be {MULAW_LEVELS}, got {}", self.levels)));
        }
        if !self.gru_a.is_multiple_of(16) {
            return Err(Error::param(format!("GRU-A size {} must be a multiple of 16", self.gru_a)));
        }
        if !FRAME_SIZE.is_multiple_of(self.samples_per_step()) {
            return Err(Error::param(format!(
                "{} bands × {} time steps does not divide the {FRAME_SIZE}-sample frame",
                self.bands, self.time_span
            )));
        }
        if mode == Mode::Baseline && (self.bands != 1 || self.time_span != 1) {
            return Err(Error::param("baseline mode is single-band, single-time"));
        }
        Ok(())
    }
}

/// Kinds of μ-law coded GRU-A inputs, per band.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputRole {
    /// e_{t−1}
    Exc1,
    /// e_{t−2}
    Exc2,
    /// s_{t−1}
    Sig1,
    /// s_{t−2}
    Sig2,
    /// p_{t−1}
    Pred1,
    /// p_t
    Pred0,
}

impl InputRole {
    pub const ALL: [InputRole; 6] =
        [InputRole::Exc1, InputRole::Exc2, InputRole::Sig1, InputRole::Sig2, InputRole::Pred1, InputRole::Pred0];

    pub fn roles_for(mode: Mode) -> &'static [InputRole] {
        match mode {
            Mode::Baseline => &[InputRole::Exc1, InputRole::Sig1, InputRole::Pred0],
            Mode::Mmt => &Self::ALL,
        }
    }

    fn suffix(self) -> &'static str {
        match self {
            InputRole::Exc1 => "e1",
            InputRole::Exc2 => "e2",
            InputRole::Sig1 => "s1",
            InputRole::Sig2 => "s2",
            InputRole::Pred1 => "p1",
            InputRole::Pred0 => "p0",
        }
    }

    /// Embedding table name, e.g. `b2.s1`.
    pub fn table_name(self, band: usize) -> String {
        format!("b{band}.{}", self.suffix())
    }
}

/// Multiply-accumulate counts of one SRN forward pass, per component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SrnCost {
    pub gru_a_macs: usize,
    pub gru_b_macs: usize,
    pub head_macs: usize,
}

impl SrnCost {
    pub fn flops(&self) -> f64 {
        2.0 * (self.gru_a_macs + self.gru_b_macs + self.head_macs) as f64
    }
}

/// All network parameters. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub(crate) mode: Mode,
    pub(crate) config: ModelConfig,
    pub(crate) frn: FrnParams,
    /// Condition → GRU-A gate inputs, `3G_A × cond`.
    pub(crate) cond_a: DenseMatrix,
    /// Condition → GRU-B gate inputs, `3G_B × cond`.
    pub(crate) cond_b: DenseMatrix,
    pub(crate) embeddings: EmbeddingSet,
    pub(crate) gru_a: GruParams,
    /// GRU-A output → GRU-B gate inputs, `3G_B × G_A`.
    pub(crate) gru_b_input: DenseMatrix,
    pub(crate) gru_b: GruParams,
    pub(crate) heads: Vec<DualFcParams>,
    /// Embedding index per (band, role), `None` for roles the mode does not use.
    pub(crate) role_slots: Vec<[Option<usize>; 6]>,
}

/// Raw parts for [`ModelWeights::new`].
#[derive(Debug, Clone)]
pub struct ModelParts {
    pub frn: FrnParams,
    pub cond_a: DenseMatrix,
    pub cond_b: DenseMatrix,
    pub embeddings: EmbeddingSet,
    pub gru_a: GruParams,
    pub gru_b_input: DenseMatrix,
    pub gru_b: GruParams,
    pub heads: Vec<DualFcParams>,
}

fn expect_shape(name: &str, got: (usize, usize), want: (usize, usize)) -> Result<()> {
    if got != want {
        return Err(Error::param(format!(
            "{name} has shape {}x{}, expected {}x{}",
            got.0, got.1, want.0, want.1
        )));
    }
    Ok(())
}

impl ModelWeights {
    pub fn new(mode: Mode, config: ModelConfig, parts: ModelParts) -> Result<Self> {
        config.validate(mode)?;
        let ModelConfig { gru_a: ga, gru_b: gb, levels: q, cond, frn_channels: ch, .. } = config;
        let ModelParts { frn, cond_a, cond_b, embeddings, gru_a, gru_b_input, gru_b, heads } = parts;

        frn.check(NB_FEATURES, ch, cond)?;
        expect_shape("cond_a", (cond_a.rows(), cond_a.cols()), (3 * ga, cond))?;
        expect_shape("cond_b", (cond_b.rows(), cond_b.cols()), (3 * gb, cond))?;
        expect_shape("gru_a.recurrent", (gru_a.recurrent.rows(), gru_a.recurrent.cols()), (3 * ga, ga))?;
        if !matches!(gru_a.recurrent, RecurrentWeights::Sparse(_)) {
            return Err(Error::param("gru_a.recurrent must be block-sparse"));
        }
        expect_shape("gru_b_input", (gru_b_input.rows(), gru_b_input.cols()), (3 * gb, ga))?;
        expect_shape("gru_b.recurrent", (gru_b.recurrent.rows(), gru_b.recurrent.cols()), (3 * gb, gb))?;
        if heads.len() != config.heads() {
            return Err(Error::param(format!("{mode} mode needs {} dual FC heads, got {}", config.heads(), heads.len())));
        }
        for (i, h) in heads.iter().enumerate() {
            expect_shape(&format!("head{i}"), (h.outputs(), h.inputs()), (q, gb))?;
        }

        let roles = InputRole::roles_for(mode);
        if embeddings.len() != roles.len() * config.bands || embeddings.width() != 3 * ga {
            return Err(Error::param(format!(
                "{mode} mode needs {} embedding tables of width {}, got {} of width {}",
                roles.len() * config.bands,
                3 * ga,
                embeddings.len(),
                embeddings.width()
            )));
        }
        let mut role_slots = Vec::with_capacity(config.bands);
        for band in 0..config.bands {
            let mut slots = [None; 6];
            for (slot, role) in slots.iter_mut().zip(InputRole::ALL) {
                if roles.contains(&role) {
                    let name = role.table_name(band);
                    *slot = Some(
                        embeddings
                            .role_index(&name)
                            .ok_or_else(|| Error::param(format!("missing embedding table '{name}'")))?,
                    );
                }
            }
            role_slots.push(slots);
        }

        Ok(Self { mode, config, frn, cond_a, cond_b, embeddings, gru_a, gru_b_input, gru_b, heads, role_slots })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn frn(&self) -> &FrnParams {
        &self.frn
    }

    pub fn cond_a(&self) -> &DenseMatrix {
        &self.cond_a
    }

    pub fn cond_b(&self) -> &DenseMatrix {
        &self.cond_b
    }

    pub fn embeddings(&self) -> &EmbeddingSet {
        &self.embeddings
    }

    pub fn gru_a(&self) -> &GruParams {
        &self.gru_a
    }

    pub fn gru_b_input(&self) -> &DenseMatrix {
        &self.gru_b_input
    }

    pub fn gru_b(&self) -> &GruParams {
        &self.gru_b
    }

    pub fn heads(&self) -> &[DualFcParams] {
        &self.heads
    }

    /// MAC counts of one SRN forward pass with these weights.
    pub fn srn_cost(&self) -> SrnCost {
        SrnCost {
            gru_a_macs: self.gru_a.recurrent.macs(),
            gru_b_macs: self.gru_b_input.rows() * self.gru_b_input.cols() + self.gru_b.recurrent.macs(),
            head_macs: self.heads.iter().map(|h| 2 * h.outputs() * h.inputs()).sum(),
        }
    }

    /// Single-band weights sharing this model's FRN, GRU layers and band-0
    /// inputs, with the first dual FC head.
    pub fn to_baseline(&self) -> Result<ModelWeights> {
        if self.mode == Mode::Baseline {
            return Ok(self.clone());
        }
        let entries = InputRole::roles_for(Mode::Baseline)
            .iter()
            .map(|role| {
                let name = role.table_name(0);
                let idx = self.embeddings.role_index(&name).expect("validated at construction");
                let (_, table) = self.embeddings.iter().nth(idx).expect("index in range");
                (name, table.clone())
            })
            .collect();
        let parts = ModelParts {
            frn: self.frn.clone(),
            cond_a: self.cond_a.clone(),
            cond_b: self.cond_b.clone(),
            embeddings: EmbeddingSet::new(entries)?,
            gru_a: self.gru_a.clone(),
            gru_b_input: self.gru_b_input.clone(),
            gru_b: self.gru_b.clone(),
            heads: vec![self.heads[0].clone()],
        };
        let config = ModelConfig { bands: 1, time_span: 1, ..self.config };
        ModelWeights::new(Mode::Baseline, config, parts)
    }

    /// All-zero weights (GRU-A keeps an empty sparse matrix).
    pub fn zeros(mode: Mode, config: ModelConfig) -> Result<Self> {
        config.validate(mode)?;
        Self::build(mode, config, &mut |_| 0.0, None)
    }

    /// Uniform `±scale` weights with the given GRU-A block density.
    pub fn random(mode: Mode, config: ModelConfig, seed: u64, scale: f32, density: f64) -> Result<Self> {
        config.validate(mode)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sparse = BlockSparseMatrix::random(3 * config.gru_a, config.gru_a, density, scale, &mut rng)?;
        Self::build(mode, config, &mut |_| rng.random_range(-scale..=scale), Some(sparse))
    }

    fn build(
        mode: Mode,
        config: ModelConfig,
        draw: &mut dyn FnMut(()) -> f32,
        sparse: Option<BlockSparseMatrix>,
    ) -> Result<Self> {
        let ModelConfig { gru_a: ga, gru_b: gb, levels: q, cond, frn_channels: ch, .. } = config;
        let mut vec = |n: usize| -> Vec<f32> { (0..n).map(|_| draw(())).collect() };
        let conv1 = Conv1d::new(ch, NB_FEATURES, FRN_CONV_WIDTH, vec(ch * NB_FEATURES * FRN_CONV_WIDTH), vec(ch))?;
        let conv2 = Conv1d::new(ch, ch, FRN_CONV_WIDTH, vec(ch * ch * FRN_CONV_WIDTH), vec(ch))?;
        let dense1 = DenseLayer::new(DenseMatrix::from_row_major(cond, ch, &vec(cond * ch))?, vec(cond))?;
        let dense2 = DenseLayer::new(DenseMatrix::from_row_major(cond, cond, &vec(cond * cond))?, vec(cond))?;
        let frn = FrnParams { conv1, conv2, dense1, dense2 };

        let cond_a = DenseMatrix::from_row_major(3 * ga, cond, &vec(3 * ga * cond))?;
        let cond_b = DenseMatrix::from_row_major(3 * gb, cond, &vec(3 * gb * cond))?;
        let mut tables = Vec::new();
        for band in 0..config.bands {
            for role in InputRole::roles_for(mode) {
                tables.push((role.table_name(band), EmbeddingTable::new(3 * ga, vec(MULAW_LEVELS * 3 * ga))?));
            }
        }
        let embeddings = EmbeddingSet::new(tables)?;
        let sparse = match sparse {
            Some(s) => s,
            None => BlockSparseMatrix::new(3 * ga, ga, Vec::new())?,
        };
        let gru_a = GruParams::new(RecurrentWeights::Sparse(sparse), vec(3 * ga))?;
        let gru_b_input = DenseMatrix::from_row_major(3 * gb, ga, &vec(3 * gb * ga))?;
        let gru_b = GruParams::new(
            RecurrentWeights::Dense(DenseMatrix::from_row_major(3 * gb, gb, &vec(3 * gb * gb))?),
            vec(3 * gb),
        )?;
        let heads = (0..config.heads())
            .map(|_| {
                DualFcParams::new(
                    DenseMatrix::from_row_major(q, gb, &vec(q * gb))?,
                    DenseMatrix::from_row_major(q, gb, &vec(q * gb))?,
                    vec(q),
                    vec(q),
                    vec(q),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let parts = ModelParts { frn, cond_a, cond_b, embeddings, gru_a, gru_b_input, gru_b, heads };
        ModelWeights::new(mode, config, parts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: ModelConfig =
        ModelConfig { gru_a: 32, gru_b: 8, levels: 256, bands: 4, time_span: 2, frn_channels: 8, cond: 8 };

    #[test]
    fn default_dimensions() {
        let c = ModelConfig::MMT;
        assert_eq!((c.gru_a, c.gru_b, c.levels, c.bands, c.time_span), (384, 16, 256, 4, 2));
        assert_eq!(c.steps_per_frame(), 20);
        assert_eq!(ModelConfig::BASELINE.steps_per_frame(), 160);
    }

    #[test]
    fn baseline_carries_one_head() {
        let w = ModelWeights::random(Mode::Baseline, ModelConfig { bands: 1, time_span: 1, ..SMALL }, 1, 0.1, 0.1)
            .unwrap();
        assert_eq!(w.heads().len(), 1);
        assert_eq!(w.embeddings().len(), 3);
        let m = ModelWeights::random(Mode::Mmt, SMALL, 1, 0.1, 0.1).unwrap();
        assert_eq!(m.heads().len(), 8);
        assert_eq!(m.embeddings().len(), 24);
    }

    #[test]
    fn baseline_rejects_multiband_config() {
        assert!(ModelWeights::zeros(Mode::Baseline, SMALL).is_err());
        assert!(ModelWeights::zeros(Mode::Mmt, ModelConfig { bands: 3, ..SMALL }).is_err());
        assert!(ModelWeights::zeros(Mode::Mmt, ModelConfig { levels: 128, ..SMALL }).is_err());
    }

    #[test]
    fn derived_baseline_shares_layers() {
        let m = ModelWeights::random(Mode::Mmt, SMALL, 3, 0.1, 0.25).unwrap();
        let b = m.to_baseline().unwrap();
        assert_eq!(b.mode(), Mode::Baseline);
        assert_eq!(b.gru_a(), m.gru_a());
        assert_eq!(b.heads()[0], m.heads()[0]);
        assert_eq!(b.srn_cost().gru_a_macs, m.srn_cost().gru_a_macs);
        assert_eq!(m.srn_cost().head_macs, 8 * b.srn_cost().head_macs);
    }

    #[test]
    fn mode_parses() {
        assert_eq!("mmt".parse::<Mode>().unwrap(), Mode::Mmt);
        assert!("both".parse::<Mode>().is_err());
    }
}
