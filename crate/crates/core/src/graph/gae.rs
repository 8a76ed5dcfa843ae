//! Graph attention encoder.
//!
//! Per head, `e_ij = leakyReLU(a·[Wh_i ‖ Wh_j])` over `j ∈ N(i) ∪ {i}`,
//! `α = softmax_j(e_ij)` and `h'_i = Σ_j α_ij W h_j`. Heads are averaged and
//! the layer activation is applied to the average.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::KeyedRng;
use crate::tensor::{ParamId, ParamStore, Tape, Var};

use super::types::EmotionGraph;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    LeakyRelu,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaeConfig {
    pub layers: usize,
    pub heads: usize,
    pub activation: Activation,
    /// Negative slope of the attention-logit leaky ReLU (and of the
    /// `LeakyRelu` activation).
    pub negative_slope: f64,
}

impl Default for GaeConfig {
    fn default() -> Self {
        GaeConfig { layers: 1, heads: 1, activation: Activation::Identity, negative_slope: 0.2 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GaeHead {
    /// `d×d` node transform, applied as `H·W`.
    pub w: ParamId,
    /// `1×2d` attention vector over `[Wh_i ‖ Wh_j]`.
    pub a: ParamId,
}

#[derive(Debug, Clone)]
pub struct GaeParams {
    pub layers: Vec<Vec<GaeHead>>,
    pub d: usize,
    pub config: GaeConfig,
}

impl GaeParams {
    pub fn new(store: &mut ParamStore, name: &str, d: usize, config: GaeConfig, rng: &mut KeyedRng) -> Result<Self> {
        if d == 0 || config.layers == 0 || config.heads == 0 {
            return Err(Error::Config(format!(
                "{name}: width {d}, {} layers, {} heads must all be positive",
                config.layers, config.heads
            )));
        }
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let mut heads = Vec::with_capacity(config.heads);
            for h in 0..config.heads {
                let w = store.add_uniform(format!("{name}.l{l}.h{h}.w"), d, d, d, rng)?;
                let a = store.add_uniform(format!("{name}.l{l}.h{h}.a"), 1, 2 * d, 2 * d, rng)?;
                heads.push(GaeHead { w, a });
            }
            layers.push(heads);
        }
        Ok(GaeParams { layers, d, config })
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.layers.iter().flatten().flat_map(|h| [h.w, h.a]).collect()
    }
}

/// One attention head over `h (n×d)`; returns `(h', α)`.
fn gae_head(tape: &mut Tape, h: Var, head: GaeHead, d: usize, slope: f64, mask: &[bool]) -> Result<(Var, Var)> {
    let w = tape.param(head.w);
    let a = tape.param(head.a);
    let wh = tape.matmul(h, w)?;
    let a_src = tape.slice_cols(a, 0, d)?;
    let a_dst = tape.slice_cols(a, d, d)?;
    let a_src_t = tape.transpose(a_src);
    let a_dst_t = tape.transpose(a_dst);
    let s_src = tape.matmul(wh, a_src_t)?;
    let s_dst = tape.matmul(wh, a_dst_t)?;
    let logits = tape.outer_sum(s_src, s_dst)?;
    let e = tape.leaky_relu(logits, slope);
    let alpha = tape.masked_softmax_rows(e, mask.to_vec())?;
    let out = tape.matmul(alpha, wh)?;
    Ok((out, alpha))
}

/// Encodes `graph` and returns it with updated features and attention.
pub fn gae_encode(tape: &mut Tape, graph: &EmotionGraph, params: &GaeParams) -> Result<EmotionGraph> {
    let n = graph.node_count();
    if n == 0 {
        return Err(Error::Argument("cannot encode an empty graph".into()));
    }
    let (rows, cols) = tape.shape(graph.features);
    if rows != n || cols != params.d {
        return Err(Error::Shape(format!("graph features {rows}x{cols}, expected {n}x{}", params.d)));
    }
    let mask = graph.topology.attention_mask();
    let cfg = params.config;
    let mut h = graph.features;
    let mut attention = Vec::new();
    for layer in &params.layers {
        let mut acc: Option<Var> = None;
        for &head in layer {
            let (out, alpha) = gae_head(tape, h, head, params.d, cfg.negative_slope, &mask)?;
            attention.push(alpha);
            acc = Some(match acc {
                None => out,
                Some(prev) => tape.add(prev, out)?,
            });
        }
        let mut z = acc.expect("at least one head");
        if layer.len() > 1 {
            z = tape.scale(z, 1.0 / layer.len() as f64);
        }
        h = match cfg.activation {
            Activation::Identity => z,
            Activation::LeakyRelu => tape.leaky_relu(z, cfg.negative_slope),
            Activation::Tanh => tape.tanh(z),
        };
    }
    Ok(EmotionGraph { topology: graph.topology.clone(), features: h, encoded: true, attention })
}
