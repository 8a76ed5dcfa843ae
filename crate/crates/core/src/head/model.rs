//! End-to-end model and the toy mel-regression training loop.

use crate::error::{Error, Result};
use crate::footage::{generate_held_out, generate_library, ClusterConfig, FootageLibrary, FootageRecord, Schema};
use crate::graph::{BasicEmotion, GaeConfig, ProgressiveConfig, ProgressiveEncoder, ProgressiveOutput};
use crate::retrieval::{retrieve_all, Query, RetrievalConfig, RetrievalResult};
use crate::rng::{Key, KeyedRng};
use crate::tensor::{AdamConfig, AdamState, Grads, Matrix, ParamStore, Tape, Var};

use super::aggregate::{AggregateOutput, AggregationHead, HeadConfig};
use super::aligned::{stub_aligned_sequence, AlignedSequence};
use super::mel::{toy_mel_head, MelHead, DEFAULT_N_MEL};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub schema: Schema,
    pub d_h: usize,
    pub n_mel: usize,
    pub gae: GaeConfig,
    pub per_stage_gae: bool,
    pub ca_heads: usize,
    pub conv_width: usize,
}

impl ModelConfig {
    pub fn new(schema: Schema, d_h: usize) -> Self {
        ModelConfig {
            schema,
            d_h,
            n_mel: DEFAULT_N_MEL,
            gae: GaeConfig::default(),
            per_stage_gae: false,
            ca_heads: 1,
            conv_width: 1,
        }
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::new(Schema::default(), 256)
    }
}

/// Inputs and regression target for one utterance.
#[derive(Debug, Clone)]
pub struct ToyBatch {
    pub aligned: AlignedSequence,
    pub basic: BasicEmotion,
    pub retrieval: RetrievalResult,
    /// `L×n_mel`.
    pub target_mel: Matrix,
}

#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub progressive: ProgressiveOutput,
    pub aggregate: AggregateOutput,
    pub h_tvr: Var,
    pub mel: Var,
}

/// Parameters of every learned stage plus the store that owns them.
#[derive(Debug, Clone)]
pub struct DubberModel {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub encoder: ProgressiveEncoder,
    pub head: AggregationHead,
    pub mel: MelHead,
}

impl DubberModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut store = ParamStore::new();
        let mut rng = KeyedRng::new(seed, &[Key::Str("model-init")]);
        let progressive =
            ProgressiveConfig { d_h: config.d_h, gae: config.gae, per_stage_params: config.per_stage_gae };
        let encoder = ProgressiveEncoder::new(&mut store, &config.schema, progressive, &mut rng)?;
        let head_cfg = HeadConfig { d_h: config.d_h, ca_heads: config.ca_heads, conv_width: config.conv_width };
        let head = AggregationHead::new(&mut store, head_cfg, &mut rng)?;
        let mel = MelHead::new(&mut store, config.d_h, config.n_mel, &mut rng)?;
        Ok(DubberModel { config, store, encoder, head, mel })
    }

    /// Records the full forward pass on `tape`, which must borrow this
    /// model's store.
    pub fn forward(&self, tape: &mut Tape, batch: &ToyBatch) -> Result<ForwardTrace> {
        let (l, d) = batch.aligned.features.shape();
        if d != self.config.d_h || batch.target_mel.shape() != (l, self.config.n_mel) {
            return Err(Error::Shape(format!(
                "batch aligned {l}x{d} / target {:?} vs model d_h {} n_mel {}",
                batch.target_mel.shape(),
                self.config.d_h,
                self.config.n_mel
            )));
        }
        let progressive = self.encoder.encode(tape, &batch.basic, &batch.retrieval)?;
        let h_tvr = tape.constant(batch.aligned.features.clone());
        let aggregate =
            self.head.aggregate(tape, h_tvr, progressive.h_beg(), progressive.h_ieg(), progressive.h_deg())?;
        let mel = toy_mel_head(tape, aggregate.e_out, &self.mel)?;
        Ok(ForwardTrace { progressive, aggregate, h_tvr, mel })
    }

    /// Forward pass plus the MSE to the batch target.
    pub fn loss(&self, tape: &mut Tape, batch: &ToyBatch) -> Result<(ForwardTrace, Var)> {
        let trace = self.forward(tape, batch)?;
        let target = tape.constant(batch.target_mel.clone());
        let loss = tape.mse(trace.mel, target)?;
        Ok((trace, loss))
    }

    /// Loss value and parameter gradients without touching the store.
    pub fn loss_and_grads(&self, batch: &ToyBatch) -> Result<(f64, Grads)> {
        let mut tape = Tape::new(&self.store);
        let (_, loss) = self.loss(&mut tape, batch)?;
        let value = tape.scalar(loss);
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("toy loss is {value}")));
        }
        Ok((value, tape.backward(loss)?))
    }
}

/// One optimization step; returns the loss before the update.
pub fn toy_train_step(model: &mut DubberModel, batch: &ToyBatch, adam: &mut AdamState) -> Result<f64> {
    let (loss, grads) = model.loss_and_grads(batch)?;
    model.store.zero_grad();
    model.store.accumulate(&grads);
    adam.step(&mut model.store);
    Ok(loss)
}

/// Runs `steps` updates and returns the per-step losses.
pub fn train_toy(model: &mut DubberModel, batch: &ToyBatch, steps: usize, adam: AdamConfig) -> Result<Vec<f64>> {
    let mut state = AdamState::new(&model.store, adam);
    (0..steps).map(|_| toy_train_step(model, batch, &mut state)).collect()
}

/// Model width of the shipped toy fixture. Under the default Adam settings
/// and no warmup, widths of 128 and above can diverge on some seeds.
pub const TOY_D_H: usize = 64;
pub const TOY_LEN: usize = 16;
pub const TOY_K: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixtureConfig {
    pub seed: u64,
    /// Aligned sequence length `L`.
    pub len: usize,
    /// Retrieval width; 0 yields empty retrieval lists.
    pub retrieval: RetrievalConfig,
    pub library: ClusterConfig,
}

impl FixtureConfig {
    pub fn new(seed: u64, len: usize, k: usize, schema: Schema) -> Self {
        FixtureConfig {
            seed,
            len,
            retrieval: RetrievalConfig { k, ..Default::default() },
            library: ClusterConfig { seed, n: 64, schema, ..Default::default() },
        }
    }

    /// The shipped fixture: `L = TOY_LEN`, `K = TOY_K`, default schema.
    pub fn shipped(seed: u64) -> Self {
        FixtureConfig::new(seed, TOY_LEN, TOY_K, Schema::default())
    }
}

#[derive(Debug, Clone)]
pub struct ToyFixture {
    pub library: FootageLibrary,
    pub query: FootageRecord,
    pub batch: ToyBatch,
}

/// Batch for `query` against `library`: retrieval excluding the query's own
/// id (skipped when `K = 0`), a stub aligned sequence and a uniform
/// `[-1, 1)` mel target, both keyed by `cfg.seed`.
pub fn toy_batch(
    library: &FootageLibrary,
    query: &FootageRecord,
    cfg: &FixtureConfig,
    d_h: usize,
    n_mel: usize,
) -> Result<ToyBatch> {
    let q = Query::from_record(query);
    let retrieval =
        if cfg.retrieval.k == 0 { RetrievalResult::empty() } else { retrieve_all(library, &q, &cfg.retrieval)? };
    let aligned = stub_aligned_sequence(cfg.seed, cfg.len, d_h)?;
    let mut rng = KeyedRng::new(cfg.seed, &[Key::Str("toy-mel-target")]);
    let target_mel = Matrix::from_fn(cfg.len, n_mel, |_, _| rng.uniform(-1.0, 1.0));
    Ok(ToyBatch { aligned, basic: BasicEmotion::from_query(&q), retrieval, target_mel })
}

/// Clustered library with one held-out query retrieved against it.
pub fn toy_fixture(cfg: &FixtureConfig, d_h: usize, n_mel: usize) -> Result<ToyFixture> {
    let library = generate_library(&cfg.library)?;
    let query = generate_held_out(&cfg.library, 1)?.remove(0);
    let batch = toy_batch(&library, &query, cfg, d_h, n_mel)?;
    Ok(ToyFixture { library, query, batch })
}
