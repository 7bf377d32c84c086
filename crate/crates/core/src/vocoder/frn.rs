use super::weights::ModelWeights;
use crate::error::{Error, Result};
use crate::features::{FeatureFrame, NB_FEATURES};
use crate::neuralops::{tanh_approx, vectorized, DenseMatrix};

pub const FRN_CONV_WIDTH: usize = 3;

/// Frames of replication padding on each side of the input, enough for
/// two valid width-3 convolutions.
const PAD: usize = FRN_CONV_WIDTH - 1;

/// Pitch periods enter the network scaled to order one.
const PITCH_SCALE: f32 = 0.01;

/// One-dimensional convolution over frames, weights laid out `[out][in][tap]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    outputs: usize,
    inputs: usize,
    width: usize,
    weight: Vec<f32>,
    bias: Vec<f32>,
    /// The same weights as one `outputs × inputs` matrix per tap.
    taps: Vec<DenseMatrix>,
}

impl Conv1d {
    pub fn new(outputs: usize, inputs: usize, width: usize, weight: Vec<f32>, bias: Vec<f32>) -> Result<Self> {
        if weight.len() != outputs * inputs * width || bias.len() != outputs {
            return Err(Error::param(format!(
                "conv {outputs}x{inputs}x{width} got {} weights and {} biases",
                weight.len(),
                bias.len()
            )));
        }
        let taps = (0..width)
            .map(|k| DenseMatrix::from_fn(outputs, inputs, |o, i| weight[(o * inputs + i) * width + k]))
            .collect();
        Ok(Self { outputs, inputs, width, weight, bias, taps })
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn weight(&self) -> &[f32] {
        &self.weight
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    /// Valid convolution with tanh: `input.len() − width + 1` output rows.
    #[inline(always)]
    fn forward(&self, input: &[Vec<f32>]) -> Vec<Vec<f32>> {
        let count = input.len() + 1 - self.width;
        let mut out = Vec::with_capacity(count);
        for t in 0..count {
            let mut acc = self.bias.clone();
            for (tap, x) in self.taps.iter().zip(&input[t..]) {
                tap.gemv_acc(x, &mut acc);
            }
            for v in acc.iter_mut() {
                *v = tanh_approx(*v);
            }
            out.push(acc);
        }
        out
    }
}

/// Fully connected layer with tanh.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: DenseMatrix,
    pub bias: Vec<f32>,
}

impl DenseLayer {
    pub fn new(weight: DenseMatrix, bias: Vec<f32>) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::param(format!("dense layer has {} rows but {} biases", weight.rows(), bias.len())));
        }
        Ok(Self { weight, bias })
    }

    #[inline(always)]
    fn forward(&self, x: &[f32]) -> Vec<f32> {
        let mut out = self.bias.clone();
        self.weight.gemv_acc(x, &mut out);
        for v in out.iter_mut() {
            *v = tanh_approx(*v);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrnParams {
    pub conv1: Conv1d,
    pub conv2: Conv1d,
    pub dense1: DenseLayer,
    pub dense2: DenseLayer,
}

impl FrnParams {
    pub(crate) fn check(&self, features: usize, channels: usize, cond: usize) -> Result<()> {
        let ok = self.conv1.inputs == features
            && self.conv1.outputs == channels
            && self.conv1.width == FRN_CONV_WIDTH
            && self.conv2.inputs == channels
            && self.conv2.outputs == channels
            && self.conv2.width == FRN_CONV_WIDTH
            && self.dense1.weight.cols() == channels
            && self.dense1.weight.rows() == cond
            && self.dense2.weight.cols() == cond
            && self.dense2.weight.rows() == cond;
        if !ok {
            return Err(Error::param(format!(
                "frame-rate network shapes do not match {features} features, {channels} channels, {cond} outputs"
            )));
        }
        Ok(())
    }
}

/// Per-frame conditioning produced by the frame-rate network.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionVector(pub Vec<f32>);

impl ConditionVector {
    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }
}

/// Network input for one frame: cepstrum, scaled pitch period, correlation.
pub fn frn_input(frame: &FeatureFrame) -> [f32; NB_FEATURES] {
    let mut x = frame.to_array();
    x[NB_FEATURES - 2] *= PITCH_SCALE;
    x
}

/// Runs two width-3 convolutions (second with a residual connection)
/// and two dense layers over the whole frame sequence. Sequence edges
/// are replication padded, so each output depends on ±2 input frames.
pub fn frn_forward(frames: &[FeatureFrame], weights: &ModelWeights) -> Result<Vec<ConditionVector>> {
    if frames.is_empty() {
        return Err(Error::param("frame-rate network needs at least one frame"));
    }
    let p = &weights.frn;
    let n = frames.len();
    let padded: Vec<Vec<f32>> =
        (0..n + 2 * PAD).map(|i| frn_input(&frames[i.saturating_sub(PAD).min(n - 1)]).to_vec()).collect();
    Ok(vectorized(#[inline(always)] || {
        let c1 = p.conv1.forward(&padded);
        let c2 = p.conv2.forward(&c1);
        let mut out = Vec::with_capacity(c2.len());
        for (t, row) in c2.iter().enumerate() {
            let mut res = row.clone();
            for (r, skip) in res.iter_mut().zip(&c1[t + 1]) {
                *r += skip;
            }
            out.push(ConditionVector(p.dense2.forward(&p.dense1.forward(&res))));
        }
        out
    }))
}
