//! On-disk formats: the `MMLP` weights container, `.f32feat` feature
//! files and 16-bit PCM WAV output.
//!
//! `MMLP` layout, all integers and reals little-endian:
//!
//! ```text
//! "MMLP"  version:u32  mode:u32 (0 baseline, 1 mmt)
//! gru_a gru_b levels bands time_span embed_width frn_channels cond features : u32 × 9
//! section_count:u32
//! section × count:
//!   name_len:u32 name:utf8  kind:u8 (0 dense, 1 block-sparse)  ndim:u8  shape:u32 × ndim
//!   dense:  f32 × Π shape (row-major)
//!   sparse: block_count:u32, then (row_block:u32, col:u32, f32 × 16) × block_count
//! ```

use std::collections::HashMap;
use std::fs;
use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{parse_feature_file, serialize_features, FeatureFrame, MULAW_LEVELS, NB_FEATURES};
use crate::neuralops::{
    BlockSparseMatrix, DenseMatrix, DualFcParams, EmbeddingSet, EmbeddingTable, GruParams, RecurrentWeights,
    SparseBlock, BLOCK_ROWS,
};
use crate::vocoder::{Conv1d, DenseLayer, FrnParams, InputRole, Mode, ModelConfig, ModelParts, ModelWeights, FRN_CONV_WIDTH};
use crate::SAMPLE_RATE;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"MMLP";
pub const WEIGHTS_VERSION: u32 = 1;
/// Magnitude bound of generated test weights.
pub const RANDOM_WEIGHT_SCALE: f32 = 0.1;
/// GRU-A block density of generated test weights.
pub const RANDOM_WEIGHT_DENSITY: f64 = 0.1;

const KIND_DENSE: u8 = 0;
const KIND_SPARSE: u8 = 1;
const SPARSE_RECORD_BYTES: usize = 8 + 4 * BLOCK_ROWS;

#[derive(Debug, Clone, PartialEq)]
enum Tensor {
    Dense { shape: Vec<usize>, values: Vec<f32> },
    Sparse { shape: Vec<usize>, blocks: Vec<SparseBlock> },
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: usize) {
        let v = u32::try_from(v).expect("dimension fits in u32");
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn header(&mut self, name: &str, kind: u8, shape: &[usize]) {
        self.u32(name.len());
        self.0.extend_from_slice(name.as_bytes());
        self.0.push(kind);
        self.0.push(shape.len() as u8);
        shape.iter().for_each(|&d| self.u32(d));
    }

    fn dense(&mut self, name: &str, shape: &[usize], values: &[f32]) {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        self.header(name, KIND_DENSE, shape);
        values.iter().for_each(|v| self.0.extend_from_slice(&v.to_le_bytes()));
    }

    fn matrix(&mut self, name: &str, m: &DenseMatrix) {
        self.dense(name, &[m.rows(), m.cols()], &m.to_row_major());
    }

    fn sparse(&mut self, name: &str, m: &BlockSparseMatrix) {
        self.header(name, KIND_SPARSE, &[m.rows(), m.cols()]);
        self.u32(m.num_blocks());
        for b in m.blocks() {
            self.u32(b.row_block);
            self.u32(b.col);
            b.values.iter().for_each(|v| self.0.extend_from_slice(&v.to_le_bytes()));
        }
    }
}

/// Encodes weights as an `MMLP` container.
pub fn serialize_weights(w: &ModelWeights) -> Vec<u8> {
    let c = w.config();
    let mut out = Writer(WEIGHTS_MAGIC.to_vec());
    out.u32(WEIGHTS_VERSION as usize);
    out.u32(match w.mode() {
        Mode::Baseline => 0,
        Mode::Mmt => 1,
    });
    for d in [c.gru_a, c.gru_b, c.levels, c.bands, c.time_span, 3 * c.gru_a, c.frn_channels, c.cond, NB_FEATURES] {
        out.u32(d);
    }
    let sections = 8 + 2 + w.embeddings().len() + 5 + 5 * w.heads().len();
    out.u32(sections);

    let f = w.frn();
    for (name, conv) in [("frn.conv1", &f.conv1), ("frn.conv2", &f.conv2)] {
        out.dense(&format!("{name}.weight"), &[conv.outputs(), conv.inputs(), conv.width()], conv.weight());
        out.dense(&format!("{name}.bias"), &[conv.outputs()], conv.bias());
    }
    for (name, layer) in [("frn.dense1", &f.dense1), ("frn.dense2", &f.dense2)] {
        out.matrix(&format!("{name}.weight"), &layer.weight);
        out.dense(&format!("{name}.bias"), &[layer.bias.len()], &layer.bias);
    }
    out.matrix("cond_a.weight", w.cond_a());
    out.matrix("cond_b.weight", w.cond_b());
    for (name, table) in w.embeddings().iter() {
        out.dense(&format!("embed.{name}"), &[MULAW_LEVELS, table.width()], table.data());
    }
    match &w.gru_a().recurrent {
        RecurrentWeights::Sparse(m) => out.sparse("gru_a.recurrent", m),
        RecurrentWeights::Dense(_) => unreachable!("GRU-A is block-sparse by construction"),
    }
    out.dense("gru_a.bias", &[w.gru_a().bias.len()], &w.gru_a().bias);
    out.matrix("gru_b.input", w.gru_b_input());
    match &w.gru_b().recurrent {
        RecurrentWeights::Dense(m) => out.matrix("gru_b.recurrent", m),
        RecurrentWeights::Sparse(_) => unreachable!("GRU-B is dense by construction"),
    }
    out.dense("gru_b.bias", &[w.gru_b().bias.len()], &w.gru_b().bias);
    for (j, h) in w.heads().iter().enumerate() {
        out.matrix(&format!("head{j}.w1"), &h.w1);
        out.matrix(&format!("head{j}.w2"), &h.w2);
        out.dense(&format!("head{j}.a1"), &[h.a1.len()], &h.a1);
        out.dense(&format!("head{j}.a2"), &[h.a2.len()], &h.a2);
        out.dense(&format!("head{j}.b"), &[h.b.len()], &h.b);
    }
    out.0
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn fail(&self, context: impl Into<String>) -> Error {
        Error::Format { offset: self.pos as u64, context: format!("MMLP: {}", context.into()) }
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(self.fail(format!("truncated {what} (need {n} bytes, {} left)", self.remaining())));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let bytes = n.checked_mul(4).ok_or_else(|| self.fail(format!("{what} size overflows")))?;
        let start = self.pos;
        let raw = self.take(bytes, what)?;
        let values: Vec<f32> =
            raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Format {
                offset: (start + 4 * i) as u64,
                context: format!("MMLP: non-finite value in {what}"),
            });
        }
        Ok(values)
    }

    fn section(&mut self) -> Result<(String, Tensor, usize)> {
        let start = self.pos;
        let len = self.u32("section name length")?;
        let name = std::str::from_utf8(self.take(len, "section name")?)
            .map_err(|_| Error::Format { offset: (start + 4) as u64, context: "MMLP: section name is not UTF-8".into() })?
            .to_owned();
        let kind = self.u8("tensor kind")?;
        let ndim = self.u8("tensor rank")? as usize;
        if ndim == 0 || ndim > 3 {
            return Err(self.fail(format!("section '{name}' has unsupported rank {ndim}")));
        }
        let shape = (0..ndim).map(|_| self.u32("tensor shape")).collect::<Result<Vec<_>>>()?;
        let tensor = match kind {
            KIND_DENSE => {
                let n = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
                let n = n.ok_or_else(|| self.fail(format!("section '{name}' size overflows")))?;
                Tensor::Dense { values: self.f32s(n, &format!("section '{name}'"))?, shape }
            }
            KIND_SPARSE => {
                if ndim != 2 {
                    return Err(self.fail(format!("sparse section '{name}' must be 2-D")));
                }
                let count = self.u32("block count")?;
                if count.saturating_mul(SPARSE_RECORD_BYTES) > self.remaining() {
                    return Err(self.fail(format!(
                        "truncated sparse section '{name}' ({count} blocks declared, {} bytes left)",
                        self.remaining()
                    )));
                }
                let mut blocks = Vec::with_capacity(count);
                for _ in 0..count {
                    let row_block = self.u32("block row")?;
                    let col = self.u32("block column")?;
                    let v = self.f32s(BLOCK_ROWS, &format!("section '{name}' block"))?;
                    blocks.push(SparseBlock { row_block, col, values: v.try_into().expect("16 values") });
                }
                Tensor::Sparse { shape, blocks }
            }
            other => return Err(self.fail(format!("section '{name}' has unknown kind {other}"))),
        };
        Ok((name, tensor, start))
    }
}

/// Named sections with their byte offsets, consumed as the model is assembled.
struct Sections(HashMap<String, (Tensor, usize)>);

impl Sections {
    fn take(&mut self, name: &str, end: usize) -> Result<(Tensor, usize)> {
        self.0.remove(name).ok_or_else(|| Error::Format {
            offset: end as u64,
            context: format!("MMLP: missing section '{name}'"),
        })
    }

    fn dense(&mut self, name: &str, want: &[usize], end: usize) -> Result<Vec<f32>> {
        match self.take(name, end)? {
            (Tensor::Dense { shape, values }, _) if shape == want => Ok(values),
            (t, offset) => Err(Error::Format {
                offset: offset as u64,
                context: format!("MMLP: section '{name}' should be dense {want:?}, found {}", describe(&t)),
            }),
        }
    }

    fn matrix(&mut self, name: &str, rows: usize, cols: usize, end: usize) -> Result<DenseMatrix> {
        DenseMatrix::from_row_major(rows, cols, &self.dense(name, &[rows, cols], end)?)
    }

    fn sparse(&mut self, name: &str, rows: usize, cols: usize, end: usize) -> Result<BlockSparseMatrix> {
        match self.take(name, end)? {
            (Tensor::Sparse { shape, blocks }, offset) if shape == [rows, cols] => BlockSparseMatrix::new(rows, cols, blocks)
                .map_err(|e| Error::Format { offset: offset as u64, context: format!("MMLP: section '{name}': {e}") }),
            (t, offset) => Err(Error::Format {
                offset: offset as u64,
                context: format!("MMLP: section '{name}' should be sparse [{rows}, {cols}], found {}", describe(&t)),
            }),
        }
    }
}

fn describe(t: &Tensor) -> String {
    match t {
        Tensor::Dense { shape, .. } => format!("dense {shape:?}"),
        Tensor::Sparse { shape, .. } => format!("sparse {shape:?}"),
    }
}

/// Decodes and validates an `MMLP` container.
pub fn parse_weights(bytes: &[u8]) -> Result<ModelWeights> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != WEIGHTS_MAGIC {
        return Err(Error::Format { offset: 0, context: "MMLP: bad magic (not a weights file)".into() });
    }
    let version = r.u32("version")?;
    if version != WEIGHTS_VERSION as usize {
        return Err(Error::Format { offset: 4, context: format!("MMLP: unsupported version {version}") });
    }
    let mode = match r.u32("mode tag")? {
        0 => Mode::Baseline,
        1 => Mode::Mmt,
        other => return Err(Error::Format { offset: 8, context: format!("MMLP: unknown mode tag {other}") }),
    };
    let header_at = r.pos;
    let mut dims = [0usize; 9];
    for d in &mut dims {
        *d = r.u32("dimension header")?;
    }
    let [gru_a, gru_b, levels, bands, time_span, embed_width, frn_channels, cond, features] = dims;
    let config = ModelConfig { gru_a, gru_b, levels, bands, time_span, frn_channels, cond };
    let header_err = |msg: String| Error::Format { offset: header_at as u64, context: format!("MMLP: {msg}") };
    config.validate(mode).map_err(|e| header_err(format!("dimension header: {e}")))?;
    if embed_width != 3 * gru_a || features != NB_FEATURES {
        return Err(header_err(format!(
            "dimension header declares embedding width {embed_width} and {features} features, expected {} and {NB_FEATURES}",
            3 * gru_a
        )));
    }

    let count = r.u32("section count")?;
    let mut map = HashMap::new();
    for _ in 0..count {
        let (name, tensor, start) = r.section()?;
        if map.insert(name.clone(), (tensor, start)).is_some() {
            return Err(Error::Format { offset: start as u64, context: format!("MMLP: duplicate section '{name}'") });
        }
    }
    let end = r.pos;
    if r.remaining() != 0 {
        return Err(r.fail(format!("{} trailing bytes", r.remaining())));
    }
    let mut s = Sections(map);
    let (ga, gb, q, ch, k) = (gru_a, gru_b, levels, frn_channels, FRN_CONV_WIDTH);
    let conv = |s: &mut Sections, name: &str, inputs: usize| -> Result<Conv1d> {
        let w = s.dense(&format!("{name}.weight"), &[ch, inputs, k], end)?;
        let b = s.dense(&format!("{name}.bias"), &[ch], end)?;
        Conv1d::new(ch, inputs, k, w, b)
    };
    let conv1 = conv(&mut s, "frn.conv1", NB_FEATURES)?;
    let conv2 = conv(&mut s, "frn.conv2", ch)?;
    let dense1 = DenseLayer::new(s.matrix("frn.dense1.weight", cond, ch, end)?, s.dense("frn.dense1.bias", &[cond], end)?)?;
    let dense2 =
        DenseLayer::new(s.matrix("frn.dense2.weight", cond, cond, end)?, s.dense("frn.dense2.bias", &[cond], end)?)?;
    let cond_a = s.matrix("cond_a.weight", 3 * ga, cond, end)?;
    let cond_b = s.matrix("cond_b.weight", 3 * gb, cond, end)?;
    let mut tables = Vec::new();
    for band in 0..bands {
        for role in InputRole::roles_for(mode) {
            let name = role.table_name(band);
            let data = s.dense(&format!("embed.{name}"), &[MULAW_LEVELS, 3 * ga], end)?;
            tables.push((name, EmbeddingTable::new(3 * ga, data)?));
        }
    }
    let gru_a_params = GruParams::new(
        RecurrentWeights::Sparse(s.sparse("gru_a.recurrent", 3 * ga, ga, end)?),
        s.dense("gru_a.bias", &[3 * ga], end)?,
    )?;
    let gru_b_input = s.matrix("gru_b.input", 3 * gb, ga, end)?;
    let gru_b_params = GruParams::new(
        RecurrentWeights::Dense(s.matrix("gru_b.recurrent", 3 * gb, gb, end)?),
        s.dense("gru_b.bias", &[3 * gb], end)?,
    )?;
    let heads = (0..config.heads())
        .map(|j| {
            DualFcParams::new(
                s.matrix(&format!("head{j}.w1"), q, gb, end)?,
                s.matrix(&format!("head{j}.w2"), q, gb, end)?,
                s.dense(&format!("head{j}.a1"), &[q], end)?,
                s.dense(&format!("head{j}.a2"), &[q], end)?,
                s.dense(&format!("head{j}.b"), &[q], end)?,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some((name, (_, offset))) = s.0.iter().min_by_key(|(_, (_, o))| *o) {
        return Err(Error::Format { offset: *offset as u64, context: format!("MMLP: unexpected section '{name}'") });
    }
    let parts = ModelParts {
        frn: FrnParams { conv1, conv2, dense1, dense2 },
        cond_a,
        cond_b,
        embeddings: EmbeddingSet::new(tables)?,
        gru_a: gru_a_params,
        gru_b_input,
        gru_b: gru_b_params,
        heads,
    };
    ModelWeights::new(mode, config, parts)
}

pub fn load_weights(path: &Path) -> Result<ModelWeights> {
    parse_weights(&fs::read(path)?)
}

pub fn save_weights(w: &ModelWeights, path: &Path) -> Result<()> {
    Ok(fs::write(path, serialize_weights(w))?)
}

/// Default-size weights drawn uniformly from ±0.1 with 10% GRU-A block density.
pub fn gen_random_weights(seed: u64, mode: Mode) -> Result<ModelWeights> {
    ModelWeights::random(mode, ModelConfig::for_mode(mode), seed, RANDOM_WEIGHT_SCALE, RANDOM_WEIGHT_DENSITY)
}

pub fn read_features(path: &Path) -> Result<Vec<FeatureFrame>> {
    parse_feature_file(&fs::read(path)?)
}

pub fn write_features(frames: &[FeatureFrame], path: &Path) -> Result<()> {
    Ok(fs::write(path, serialize_features(frames))?)
}

/// Clamps to ±1 and scales to 16-bit PCM.
pub fn to_pcm16(sample: f64) -> i16 {
    if sample.is_nan() {
        return 0;
    }
    (sample.clamp(-1.0, 1.0) * f64::from(i16::MAX)).round() as i16
}

/// Mono 16 kHz 16-bit PCM WAV with the canonical 44-byte header.
pub fn encode_wav(samples: &[f64]) -> Result<Vec<u8>> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut cursor = Cursor::new(Vec::with_capacity(44 + 2 * samples.len()));
    let mut writer = hound::WavWriter::new(&mut cursor, spec).map_err(wav_error)?;
    for &s in samples {
        writer.write_sample(to_pcm16(s)).map_err(wav_error)?;
    }
    writer.finalize().map_err(wav_error)?;
    Ok(cursor.into_inner())
}

pub fn write_wav(samples: &[f64], path: &Path) -> Result<()> {
    Ok(fs::write(path, encode_wav(samples)?)?)
}

fn wav_error(e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::Io(io),
        other => Error::Malformed(format!("WAV encoding: {other}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: ModelConfig =
        ModelConfig { gru_a: 32, gru_b: 8, levels: 256, bands: 4, time_span: 2, frn_channels: 8, cond: 8 };

    #[test]
    fn weights_round_trip() {
        for mode in [Mode::Baseline, Mode::Mmt] {
            let cfg = if mode == Mode::Mmt { SMALL } else { ModelConfig { bands: 1, time_span: 1, ..SMALL } };
            let w = ModelWeights::random(mode, cfg, 9, 0.1, 0.2).unwrap();
            let bytes = serialize_weights(&w);
            assert_eq!(parse_weights(&bytes).unwrap(), w);
        }
    }

    #[test]
    fn truncation_reports_offset() {
        let w = ModelWeights::random(Mode::Mmt, SMALL, 1, 0.1, 0.2).unwrap();
        let bytes = serialize_weights(&w);
        for cut in [0, 3, 10, 60, bytes.len() / 2, bytes.len() - 1] {
            let err = parse_weights(&bytes[..cut]).unwrap_err();
            let msg = err.to_string();
            assert!(msg.contains("MMLP") && msg.contains("byte offset"), "{msg}");
        }
    }

    #[test]
    fn bad_magic_and_version() {
        let w = ModelWeights::zeros(Mode::Mmt, SMALL).unwrap();
        let mut bytes = serialize_weights(&w);
        bytes[4] = 9;
        assert!(parse_weights(&bytes).unwrap_err().to_string().contains("version"));
        bytes[0] = b'X';
        assert!(matches!(parse_weights(&bytes), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn huge_declared_sizes_do_not_allocate() {
        let w = ModelWeights::zeros(Mode::Mmt, SMALL).unwrap();
        let mut bytes = serialize_weights(&w);
        // First section's name length.
        let at = 4 + 4 + 4 + 36 + 4;
        bytes[at..at + 4].copy_from_slice(&u32::MAX.to_le_bytes());
        let err = parse_weights(&bytes).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{err}");
    }

    #[test]
    fn header_shape_mismatch_is_rejected() {
        let w = ModelWeights::zeros(Mode::Mmt, SMALL).unwrap();
        let mut bytes = serialize_weights(&w);
        // Declare G_B = 16 while sections carry 8.
        bytes[16..20].copy_from_slice(&16u32.to_le_bytes());
        let msg = parse_weights(&bytes).unwrap_err().to_string();
        assert!(msg.contains("MMLP") && msg.contains("should be dense"), "{msg}");
    }

    #[test]
    fn non_finite_payload_is_rejected() {
        let w = ModelWeights::zeros(Mode::Mmt, SMALL).unwrap();
        let mut bytes = serialize_weights(&w);
        let n = bytes.len();
        bytes[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
        let err = parse_weights(&bytes).unwrap_err();
        assert!(matches!(err, Error::Format { offset, .. } if offset as usize == n - 4), "{err}");
    }

    #[test]
    fn default_random_weights_have_target_density() {
        let w = gen_random_weights(3, Mode::Mmt).unwrap();
        assert_eq!(w.config(), &ModelConfig::MMT);
        match &w.gru_a().recurrent {
            RecurrentWeights::Sparse(m) => assert!((m.density() - 0.1).abs() < 0.01),
            RecurrentWeights::Dense(_) => panic!("dense GRU-A"),
        }
        assert!(w.heads()[3].w1.to_row_major().iter().all(|v| v.abs() <= 0.1));
    }

    #[test]
    fn wav_header_and_clamping() {
        let bytes = encode_wav(&vec![0.0; 16000]).unwrap();
        assert_eq!(bytes.len(), 32044);
        assert_eq!(&bytes[..4], b"RIFF");
        let bytes = encode_wav(&[2.0, -2.0, 0.5]).unwrap();
        let pcm: Vec<i16> = bytes[44..].chunks_exact(2).map(|c| i16::from_le_bytes([c[0], c[1]])).collect();
        assert_eq!(pcm, vec![32767, -32767, 16384]);
        assert_eq!(to_pcm16(f64::NAN), 0);
    }
}
