//! Construct-and-encode: each stage's basic nodes start from the previous
//! stage's encoded output.

use crate::error::{Error, Result};
use crate::footage::{Modality, Schema};
use crate::retrieval::{ModalityRetrieval, Query, QueryModality, RetrievalResult};
use crate::rng::KeyedRng;
use crate::tensor::{Linear, Matrix, ParamId, ParamStore, Tape, Var};

use super::gae::{gae_encode, GaeConfig, GaeParams};
use super::types::{EdgeKind, EmotionGraph, GraphEdge, GraphNode, NodeKind, NodeTier, Stage, Topology};

/// Raw basic emotion vectors of the target utterance. `text` is
/// `text_self ‖ text_react`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasicEmotion {
    pub scene: Vec<f64>,
    pub face: Vec<f64>,
    pub text: Vec<f64>,
}

impl BasicEmotion {
    pub fn from_query(q: &Query) -> Self {
        BasicEmotion { scene: q.scene.values().to_vec(), face: q.face.values().to_vec(), text: q.text_concat() }
    }

    pub fn get(&self, m: QueryModality) -> &[f64] {
        match m {
            QueryModality::Scene => &self.scene,
            QueryModality::Face => &self.face,
            QueryModality::Text => &self.text,
        }
    }
}

/// Per-modality linear maps from raw emotion vectors to width `d_h`.
#[derive(Debug, Clone)]
pub struct InputProjections {
    pub scene: Linear,
    pub face: Linear,
    pub text: Linear,
    pub audio: Linear,
    pub d_h: usize,
}

impl InputProjections {
    pub fn new(store: &mut ParamStore, schema: &Schema, d_h: usize, rng: &mut KeyedRng) -> Result<Self> {
        let dim = |m| schema.dim(m);
        Ok(InputProjections {
            scene: Linear::new(store, "proj.scene", dim(Modality::Scene), d_h, rng)?,
            face: Linear::new(store, "proj.face", dim(Modality::Face), d_h, rng)?,
            text: Linear::new(store, "proj.text", schema.text_dim(), d_h, rng)?,
            audio: Linear::new(store, "proj.audio", dim(Modality::Audio), d_h, rng)?,
            d_h,
        })
    }

    pub fn for_modality(&self, m: QueryModality) -> &Linear {
        match m {
            QueryModality::Scene => &self.scene,
            QueryModality::Face => &self.face,
            QueryModality::Text => &self.text,
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        [&self.scene, &self.face, &self.text, &self.audio].iter().flat_map(|l| l.params()).collect()
    }
}

/// Projects each raw vector to one `1×d_h` row; `rows` must be non-empty.
pub fn project_rows(tape: &mut Tape, rows: &[Vec<f64>], proj: &Linear) -> Result<Var> {
    if let Some(r) = rows.iter().find(|r| r.len() != proj.d_in) {
        return Err(Error::Schema(format!("projection expects dim {}, got {}", proj.d_in, r.len())));
    }
    let x = tape.constant(Matrix::from_rows(rows)?);
    proj.forward(tape, x)
}

pub fn project_inputs(tape: &mut Tape, raw: &[f64], proj: &Linear) -> Result<Var> {
    project_rows(tape, &[raw.to_vec()], proj)
}

pub fn build_basic_graph(tape: &mut Tape, basic: &BasicEmotion, proj: &InputProjections) -> Result<EmotionGraph> {
    let rows = QueryModality::ALL
        .iter()
        .map(|&m| project_inputs(tape, basic.get(m), proj.for_modality(m)))
        .collect::<Result<Vec<_>>>()?;
    let features = tape.concat_rows(&rows)?;
    Ok(EmotionGraph { topology: Topology::basic(), features, encoded: false, attention: Vec::new() })
}

fn require(g: &EmotionGraph, stage: Stage) -> Result<()> {
    if g.stage() != stage || !g.encoded {
        return Err(Error::State(format!(
            "expected an encoded {stage:?} graph, got {:?} (encoded: {})",
            g.stage(),
            g.encoded
        )));
    }
    Ok(())
}

fn check_lists(r: &ModalityRetrieval) -> Result<()> {
    if r.indirect.len() != r.hits.len() || r.matched_audio.len() != r.hits.len() {
        return Err(Error::Argument(format!(
            "{} retrieval: {} hits, {} indirect, {} audio",
            r.modality.name(),
            r.hits.len(),
            r.indirect.len(),
            r.matched_audio.len()
        )));
    }
    Ok(())
}

/// Appends one node per hit of every modality, each wired to its basic node.
fn extend(
    tape: &mut Tape,
    prev: &EmotionGraph,
    retrieved: &RetrievalResult,
    proj: &InputProjections,
    tier: NodeTier,
) -> Result<EmotionGraph> {
    let (stage, edge_kind) = match tier {
        NodeTier::Indirect => (Stage::Ieg, EdgeKind::Indirect),
        _ => (Stage::Deg, EdgeKind::Direct),
    };
    let mut topology = prev.topology.clone();
    topology.stage = stage;
    let mut parts = vec![prev.features];
    for r in retrieved.iter() {
        check_lists(r)?;
        if r.is_empty() {
            continue;
        }
        let basic = Topology::basic_index(r.modality);
        for hit in &r.hits {
            let idx = topology.nodes.len();
            topology
                .nodes
                .push(GraphNode { kind: NodeKind::new(tier, r.modality), source_record_id: Some(hit.record_id) });
            topology.edges.push(GraphEdge { a: basic, b: idx, kind: edge_kind });
        }
        let (rows, lin) = match tier {
            NodeTier::Indirect => (&r.indirect, proj.for_modality(r.modality)),
            _ => (&r.matched_audio, &proj.audio),
        };
        parts.push(project_rows(tape, rows, lin)?);
    }
    let features = if parts.len() == 1 { prev.features } else { tape.concat_rows(&parts)? };
    Ok(EmotionGraph { topology, features, encoded: false, attention: Vec::new() })
}

pub fn extend_indirect(
    tape: &mut Tape,
    encoded_beg: &EmotionGraph,
    retrieved: &RetrievalResult,
    proj: &InputProjections,
) -> Result<EmotionGraph> {
    require(encoded_beg, Stage::Beg)?;
    extend(tape, encoded_beg, retrieved, proj, NodeTier::Indirect)
}

pub fn extend_direct(
    tape: &mut Tape,
    encoded_ieg: &EmotionGraph,
    retrieved: &RetrievalResult,
    proj: &InputProjections,
) -> Result<EmotionGraph> {
    require(encoded_ieg, Stage::Ieg)?;
    extend(tape, encoded_ieg, retrieved, proj, NodeTier::Direct)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProgressiveConfig {
    pub d_h: usize,
    pub gae: GaeConfig,
    /// Separate GAE parameters per stage instead of one shared set.
    pub per_stage_params: bool,
}

impl Default for ProgressiveConfig {
    fn default() -> Self {
        ProgressiveConfig { d_h: 256, gae: GaeConfig::default(), per_stage_params: false }
    }
}

#[derive(Debug, Clone)]
pub struct ProgressiveEncoder {
    pub proj: InputProjections,
    /// One entry when shared, else one per stage in (Beg, Ieg, Deg) order.
    pub gae: Vec<GaeParams>,
    pub config: ProgressiveConfig,
}

impl ProgressiveEncoder {
    pub fn new(store: &mut ParamStore, schema: &Schema, config: ProgressiveConfig, rng: &mut KeyedRng) -> Result<Self> {
        let proj = InputProjections::new(store, schema, config.d_h, rng)?;
        let gae = if config.per_stage_params {
            ["gae.beg", "gae.ieg", "gae.deg"]
                .iter()
                .map(|name| GaeParams::new(store, name, config.d_h, config.gae, rng))
                .collect::<Result<_>>()?
        } else {
            vec![GaeParams::new(store, "gae", config.d_h, config.gae, rng)?]
        };
        Ok(ProgressiveEncoder { proj, gae, config })
    }

    pub fn gae_for(&self, stage: Stage) -> &GaeParams {
        let i = match stage {
            Stage::Beg => 0,
            Stage::Ieg => 1,
            Stage::Deg => 2,
        };
        &self.gae[i.min(self.gae.len() - 1)]
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut ids = self.proj.params();
        ids.extend(self.gae.iter().flat_map(GaeParams::params));
        ids
    }

    pub fn encode(
        &self,
        tape: &mut Tape,
        basic: &BasicEmotion,
        retrieved: &RetrievalResult,
    ) -> Result<ProgressiveOutput> {
        let g = build_basic_graph(tape, basic, &self.proj)?;
        let beg = gae_encode(tape, &g, self.gae_for(Stage::Beg))?;
        let g = extend_indirect(tape, &beg, retrieved, &self.proj)?;
        let ieg = gae_encode(tape, &g, self.gae_for(Stage::Ieg))?;
        let g = extend_direct(tape, &ieg, retrieved, &self.proj)?;
        let deg = gae_encode(tape, &g, self.gae_for(Stage::Deg))?;
        Ok(ProgressiveOutput { beg, ieg, deg })
    }
}

/// The three encoded graphs; their features are `H_beg`, `H_ieg`, `H_deg`.
#[derive(Debug, Clone)]
pub struct ProgressiveOutput {
    pub beg: EmotionGraph,
    pub ieg: EmotionGraph,
    pub deg: EmotionGraph,
}

impl ProgressiveOutput {
    pub fn h_beg(&self) -> Var {
        self.beg.features
    }

    pub fn h_ieg(&self) -> Var {
        self.ieg.features
    }

    pub fn h_deg(&self) -> Var {
        self.deg.features
    }

    pub fn graphs(&self) -> [&EmotionGraph; 3] {
        [&self.beg, &self.ieg, &self.deg]
    }
}

pub fn progressive_encode(
    tape: &mut Tape,
    basic: &BasicEmotion,
    retrieved: &RetrievalResult,
    encoder: &ProgressiveEncoder,
) -> Result<ProgressiveOutput> {
    encoder.encode(tape, basic, retrieved)
}
