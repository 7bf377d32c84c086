//! Frame-rate network plus the two sample-rate loops.
//!
//! The baseline loop is plain LPCNet: one forward pass of GRU-A → GRU-B →
//! dual FC per output sample. The multi-band multi-time loop runs the same
//! shared layers once per `N_B · N_T` samples: GRU-B feeds one dual FC head
//! per (time offset, band), and the samples of each subband are rebuilt
//! recursively as `s = e + p`, with the LPC prediction for the second time
//! offset computed after the first sample has entered the queue.

mod frn;
mod srn;
mod synth;
mod weights;

pub use frn::{frn_forward, frn_input, ConditionVector, Conv1d, DenseLayer, FrnParams, FRN_CONV_WIDTH};
pub use srn::{
    lpc_predict, srn_step_baseline, srn_step_mmt, FrameConditioning, NoProbe, SampleRecord, StepCounter,
    StreamState, SynthesisProbe,
};
pub use synth::{frame_lpc, synthesize, synthesize_with_probe};
pub use weights::{InputRole, Mode, ModelConfig, ModelParts, ModelWeights, SrnCost};
