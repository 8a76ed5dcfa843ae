use crate::error::{Error, Result};
use crate::rng::{Key, KeyedRng};
use crate::tensor::Matrix;

/// Frame-level features the aggregation head attends from (`L×d_h`).
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedSequence {
    pub features: Matrix,
}

impl AlignedSequence {
    pub fn new(features: Matrix) -> Result<Self> {
        if features.rows() == 0 || !features.is_finite() {
            return Err(Error::Argument("aligned sequence needs L >= 1 finite frames".into()));
        }
        Ok(AlignedSequence { features })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }
}

/// Stand-in for the aligner output: i.i.d. uniform `[-1, 1)` entries drawn
/// row-major from the stream keyed by `(seed, "aligned-sequence")`.
pub fn stub_aligned_sequence(seed: u64, len: usize, d_h: usize) -> Result<AlignedSequence> {
    if len == 0 || d_h == 0 {
        return Err(Error::Argument(format!("aligned sequence {len}x{d_h} must be non-empty")));
    }
    let mut rng = KeyedRng::new(seed, &[Key::Str("aligned-sequence")]);
    Ok(AlignedSequence { features: Matrix::from_fn(len, d_h, |_, _| rng.uniform(-1.0, 1.0)) })
}
