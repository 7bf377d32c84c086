/// Size of the excitation alphabet.
pub const MULAW_LEVELS: usize = 256;

const MU: f64 = 255.0;
const CENTER: i32 = 128;

/// An 8-bit μ-law code, `0..=255` with 128 representing zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MuLawIndex(u8);

impl MuLawIndex {
    pub const ZERO: MuLawIndex = MuLawIndex(CENTER as u8);

    pub fn new(index: usize) -> Option<Self> {
        u8::try_from(index).ok().map(MuLawIndex)
    }

    pub fn get(self) -> usize {
        self.0 as usize
    }
}

impl From<u8> for MuLawIndex {
    fn from(v: u8) -> Self {
        MuLawIndex(v)
    }
}

/// μ = 255 companding of a sample in `[-1, 1]`. Out-of-range input is clamped,
/// NaN encodes as zero.
pub fn mulaw_encode(sample: f64) -> MuLawIndex {
    if sample.is_nan() {
        return MuLawIndex::ZERO;
    }
    let x = sample.clamp(-1.0, 1.0);
    let u = x.signum() * 128.0 * (MU * x.abs()).ln_1p() / (MU + 1.0).ln();
    let idx = (CENTER as f64 + u.round()).clamp(0.0, 255.0);
    MuLawIndex(idx as u8)
}

pub fn mulaw_decode(index: MuLawIndex) -> f64 {
    let u = index.0 as i32 - CENTER;
    let mag = ((u.abs() as f64 / 128.0) * (MU + 1.0).ln()).exp_m1() / MU;
    if u < 0 {
        -mag
    } else {
        mag
    }
}
