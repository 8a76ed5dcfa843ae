//! Hierarchical cross-attention aggregation of the encoded graphs into the
//! aligned sequence:
//!
//! ```text
//! E_beg = Conv1D([H_tvr; CA_beg(H_tvr, H_beg, H_beg)])
//! E_ieg = Conv1D([E_beg; CA_ieg(E_beg, H_ieg, H_ieg)])
//! E_deg = Conv1D([E_ieg; CA_deg(E_ieg, H_deg, H_deg)])
//! E_out = Conv1D([H_tvr; E_deg])
//! ```
//!
//! `[a; b]` concatenates along the feature axis, so every conv maps `2·d_h`
//! to `d_h` and keeps the sequence length.

use crate::error::{Error, Result};
use crate::rng::KeyedRng;
use crate::tensor::{AttentionOutput, Conv1d, CrossAttention, ParamId, ParamStore, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadConfig {
    pub d_h: usize,
    pub ca_heads: usize,
    /// Odd conv kernel width; 1 is a per-frame linear map.
    pub conv_width: usize,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig { d_h: 256, ca_heads: 1, conv_width: 1 }
    }
}

#[derive(Debug, Clone)]
pub struct AggregationHead {
    pub ca_beg: CrossAttention,
    pub ca_ieg: CrossAttention,
    pub ca_deg: CrossAttention,
    pub conv_beg: Conv1d,
    pub conv_ieg: Conv1d,
    pub conv_deg: Conv1d,
    pub conv_out: Conv1d,
    pub config: HeadConfig,
}

#[derive(Debug, Clone)]
pub struct AggregateOutput {
    pub e_beg: Var,
    pub e_ieg: Var,
    pub e_deg: Var,
    pub e_out: Var,
    /// Cross-attention outputs of the beg, ieg and deg blocks.
    pub attention: [AttentionOutput; 3],
}

impl AggregationHead {
    pub fn new(store: &mut ParamStore, config: HeadConfig, rng: &mut KeyedRng) -> Result<Self> {
        let HeadConfig { d_h, ca_heads, conv_width } = config;
        let ca =
            |store: &mut ParamStore, rng: &mut KeyedRng, name| CrossAttention::new(store, name, d_h, ca_heads, rng);
        let conv =
            |store: &mut ParamStore, rng: &mut KeyedRng, name| Conv1d::new(store, name, 2 * d_h, d_h, conv_width, rng);
        Ok(AggregationHead {
            ca_beg: ca(store, rng, "head.ca_beg")?,
            ca_ieg: ca(store, rng, "head.ca_ieg")?,
            ca_deg: ca(store, rng, "head.ca_deg")?,
            conv_beg: conv(store, rng, "head.conv_beg")?,
            conv_ieg: conv(store, rng, "head.conv_ieg")?,
            conv_deg: conv(store, rng, "head.conv_deg")?,
            conv_out: conv(store, rng, "head.conv_out")?,
            config,
        })
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut ids: Vec<ParamId> =
            [&self.ca_beg, &self.ca_ieg, &self.ca_deg].iter().flat_map(|c| c.params()).collect();
        for c in [&self.conv_beg, &self.conv_ieg, &self.conv_deg, &self.conv_out] {
            ids.extend(c.params());
        }
        ids
    }

    pub fn aggregate(
        &self,
        tape: &mut Tape,
        h_tvr: Var,
        h_beg: Var,
        h_ieg: Var,
        h_deg: Var,
    ) -> Result<AggregateOutput> {
        let d = self.config.d_h;
        let (l, dt) = tape.shape(h_tvr);
        if l == 0 || dt != d {
            return Err(Error::Shape(format!("aligned sequence {l}x{dt}, expected Lx{d} with L >= 1")));
        }
        for (name, h) in [("H_beg", h_beg), ("H_ieg", h_ieg), ("H_deg", h_deg)] {
            if tape.shape(h).1 != d {
                return Err(Error::Shape(format!("{name} is {:?}, expected width {d}", tape.shape(h))));
            }
        }
        let stage =
            |tape: &mut Tape, x: Var, h: Var, ca: &CrossAttention, conv: &Conv1d| -> Result<(Var, AttentionOutput)> {
                let att = ca.forward(tape, x, h, h)?;
                let cat = tape.concat_cols(&[x, att.out])?;
                Ok((conv.forward(tape, cat)?, att))
            };
        let (e_beg, a_beg) = stage(tape, h_tvr, h_beg, &self.ca_beg, &self.conv_beg)?;
        let (e_ieg, a_ieg) = stage(tape, e_beg, h_ieg, &self.ca_ieg, &self.conv_ieg)?;
        let (e_deg, a_deg) = stage(tape, e_ieg, h_deg, &self.ca_deg, &self.conv_deg)?;
        let cat = tape.concat_cols(&[h_tvr, e_deg])?;
        let e_out = self.conv_out.forward(tape, cat)?;
        Ok(AggregateOutput { e_beg, e_ieg, e_deg, e_out, attention: [a_beg, a_ieg, a_deg] })
    }
}

pub fn aggregate(
    tape: &mut Tape,
    h_tvr: Var,
    h_beg: Var,
    h_ieg: Var,
    h_deg: Var,
    params: &AggregationHead,
) -> Result<AggregateOutput> {
    params.aggregate(tape, h_tvr, h_beg, h_ieg, h_deg)
}
