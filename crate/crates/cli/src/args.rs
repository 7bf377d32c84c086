use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "mmlpc", version, about = "Multi-band multi-time LPCNet vocoder tools")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a feature file to a 16 kHz 16-bit WAV file
    Synth(SynthArgs),
    /// Measure the real-time factor of one or both sample loops
    Bench(BenchArgs),
    /// Evaluate the analytic complexity model
    Flops(FlopsArgs),
    /// Check Pseudo-QMF analysis/synthesis reconstruction
    FbCheck(FbCheckArgs),
    /// Run an attention mechanism on random states and print the alignment
    AttnDemo(AttnDemoArgs),
    /// Write a random-weights model file
    GenWeights(GenWeightsArgs),
    /// Write a synthetic feature file
    GenFeatures(GenFeaturesArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Baseline,
    Mmt,
}

impl From<ModeArg> for mmlpcnet::vocoder::Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Baseline => Self::Baseline,
            ModeArg::Mmt => Self::Mmt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchMode {
    Baseline,
    Mmt,
    Both,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Defaults to the mode stored in the weights file
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Sampling temperature; 0 selects the most likely excitation
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f32,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub frames: usize,
    /// `both` needs multi-band weights; the baseline reuses their band-0 inputs and first head
    #[arg(long, value_enum)]
    pub mode: Option<BenchMode>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Print `key: value` lines instead of the text report
    #[arg(long)]
    pub kv: bool,
}

#[derive(Debug, Args)]
pub struct FlopsArgs {
    /// Fraction of GRU-A weights kept
    #[arg(long, visible_alias = "d", default_value_t = 0.1)]
    pub density: f64,
    #[arg(long, visible_alias = "ga", default_value_t = 384.0)]
    pub gru_a: f64,
    #[arg(long, visible_alias = "gb", default_value_t = 16.0)]
    pub gru_b: f64,
    /// Output alphabet size
    #[arg(long, visible_alias = "q", default_value_t = 256.0)]
    pub levels: f64,
    #[arg(long, default_value_t = 4.0)]
    pub bands: f64,
    #[arg(long, visible_alias = "timespan", default_value_t = 2.0)]
    pub time_span: f64,
    #[arg(long, visible_alias = "fs", default_value_t = 16000.0)]
    pub sample_rate: f64,
    #[arg(long)]
    pub kv: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SignalArg {
    Impulse,
    Noise,
    Sine,
}

#[derive(Debug, Args)]
pub struct FbCheckArgs {
    #[arg(long, default_value_t = 4)]
    pub bands: usize,
    #[arg(long, default_value_t = 64)]
    pub taps: usize,
    #[arg(long, value_enum, default_value_t = SignalArg::Noise)]
    pub signal: SignalArg,
    /// Sine frequency in Hz
    #[arg(long, default_value_t = 1000.0)]
    pub freq: f64,
    /// Test signal length in samples
    #[arg(long, default_value_t = 16000)]
    pub length: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mechanism {
    Lsa,
    Forward,
    Gmm,
}

#[derive(Debug, Args)]
pub struct AttnDemoArgs {
    #[arg(long, value_enum)]
    pub mechanism: Mechanism,
    #[arg(long, default_value_t = 10)]
    pub enc_len: usize,
    #[arg(long, default_value_t = 30)]
    pub dec_len: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct GenWeightsArgs {
    #[arg(long, value_enum, default_value_t = ModeArg::Mmt)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenFeaturesArgs {
    #[arg(long, default_value_t = 100)]
    pub frames: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}
