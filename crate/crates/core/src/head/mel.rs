use crate::error::Result;
use crate::rng::KeyedRng;
use crate::tensor::{Linear, ParamStore, Tape, Var};

pub const DEFAULT_N_MEL: usize = 80;

/// Per-frame linear map from `d_h` to `n_mel`.
#[derive(Debug, Clone)]
pub struct MelHead {
    pub proj: Linear,
}

impl MelHead {
    pub fn new(store: &mut ParamStore, d_h: usize, n_mel: usize, rng: &mut KeyedRng) -> Result<Self> {
        Ok(MelHead { proj: Linear::new(store, "mel", d_h, n_mel, rng)? })
    }

    pub fn n_mel(&self) -> usize {
        self.proj.d_out
    }
}

pub fn toy_mel_head(tape: &mut Tape, e_out: Var, head: &MelHead) -> Result<Var> {
    head.proj.forward(tape, e_out)
}
