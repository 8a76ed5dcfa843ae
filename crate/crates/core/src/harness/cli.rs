//! `dubber` subcommands.
//!
//! Every command is deterministic in its flags and seed. Output goes to
//! `--out` or, where optional, stdout. `MRFL_DIM_OVERRIDE` (one dim, or
//! five comma-separated dims in schema order) sets the schema of generated
//! libraries and is enforced when loading `--lib`.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::footage::codec::load_library_expecting;
use crate::footage::interchange::read_records;
use crate::footage::{
    generate_library, load_library, save_library, ClusterConfig, FootageLibrary, FootageRecord, Schema, SpeakerLayout,
};
use crate::graph::Topology;
use crate::head::{
    toy_batch, toy_fixture, train_toy, DubberModel, FixtureConfig, ModelConfig, ToyBatch, TOY_D_H, TOY_LEN,
};
use crate::retrieval::{retrieve_all, Query, RetrievalConfig, RetrievalMode, SimilarityMetric, DEFAULT_K};
use crate::tensor::{save_checkpoint, AdamConfig, GradCheckConfig, Tape};

use super::gradcheck::{pipeline_grad_check, PipelineCheck};
use super::sweep::{
    sweep_metric, sweep_scale, sweep_topk, write_metric_csv, write_scale_csv, write_topk_csv, SweepConfig,
};

pub const DIM_OVERRIDE_VAR: &str = "MRFL_DIM_OVERRIDE";

/// Largest relative error `grad-check` accepts.
pub const GRAD_CHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "dubber", version, about = "Emotion retrieval, graph encoding and toy dubbing head")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a clustered synthetic library (MRFL).
    GenSynthetic(GenArgs),
    /// Convert JSONL interchange records into an MRFL library.
    Ingest(IngestArgs),
    /// Top-K retrieval per query channel as CSV.
    Retrieve(RetrieveArgs),
    /// Progressive graph topology (and optionally features) as JSON.
    Encode(EncodeArgs),
    /// Toy mel regression: (step, loss) CSV plus an ADPK checkpoint.
    TrainToy(TrainArgs),
    /// Purity by K and retrieval mode.
    SweepTopk(SweepArgs),
    /// Purity by similarity metric and K.
    SweepMetric(SweepArgs),
    /// Purity by library fraction.
    SweepScale(SweepArgs),
    /// Finite-difference check of the full pipeline.
    GradCheck(GradArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    Cosine,
    Dot,
    Euclid,
}

impl From<MetricArg> for SimilarityMetric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Cosine => SimilarityMetric::Cosine,
            MetricArg::Dot => SimilarityMetric::DotProduct,
            MetricArg::Euclid => SimilarityMetric::NegEuclidean,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Agnostic,
    Specific,
}

impl From<ModeArg> for RetrievalMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Agnostic => RetrievalMode::SpeakerAgnostic,
            ModeArg::Specific => RetrievalMode::SpeakerSpecific,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ClusterArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Library size.
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 4)]
    pub clusters: usize,
    /// Centroid separation in units of sigma.
    #[arg(long, default_value_t = 6.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 8)]
    pub speakers: usize,
    /// Give every cluster its own speaker.
    #[arg(long)]
    pub per_cluster_speakers: bool,
}

impl ClusterArgs {
    fn config(&self, schema: Schema) -> ClusterConfig {
        ClusterConfig {
            seed: self.seed,
            n: self.n,
            clusters: self.clusters,
            separation: self.separation,
            sigma: self.sigma,
            schema,
            speakers: self.speakers,
            speaker_layout: if self.per_cluster_speakers { SpeakerLayout::PerCluster } else { SpeakerLayout::Random },
            ..ClusterConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub cluster: ClusterArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// JSONL records, one per line.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    #[arg(long)]
    pub lib: PathBuf,
    /// JSONL query records; default is every library record, each
    /// excluding itself.
    #[arg(long, conflicts_with = "query_id")]
    pub queries: Option<PathBuf>,
    /// Library records to query with, each excluding itself.
    #[arg(long, value_delimiter = ',')]
    pub query_id: Vec<u64>,
    #[arg(long, default_value_t = DEFAULT_K)]
    pub k: usize,
    #[arg(long, value_enum, default_value = "cosine")]
    pub metric: MetricArg,
    #[arg(long, value_enum, default_value = "agnostic")]
    pub mode: ModeArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct FixtureArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Library to retrieve from; default is a synthetic library and a
    /// held-out query generated from the seed.
    #[arg(long)]
    pub lib: Option<PathBuf>,
    /// Query record in `--lib`; default is its first record.
    #[arg(long, requires = "lib")]
    pub query_id: Option<u64>,
    /// Retrieval width; 0 encodes without retrieved nodes.
    #[arg(long, default_value_t = DEFAULT_K)]
    pub k: usize,
    #[arg(long, value_enum, default_value = "cosine")]
    pub metric: MetricArg,
    #[arg(long, value_enum, default_value = "agnostic")]
    pub mode: ModeArg,
    /// Aligned sequence length.
    #[arg(long, default_value_t = TOY_LEN)]
    pub len: usize,
    #[arg(long, default_value_t = 80)]
    pub n_mel: usize,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[command(flatten)]
    pub fixture: FixtureArgs,
    #[arg(long, default_value_t = 256)]
    pub d_h: usize,
    /// Include encoded node features per stage.
    #[arg(long)]
    pub features: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub fixture: FixtureArgs,
    #[arg(long, default_value_t = TOY_D_H)]
    pub d_h: usize,
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    /// Loss CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Final parameters; default is `--out` with an `.adpk` extension.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub cluster: ClusterArgs,
    /// Library to sweep; queries are then its own records, each excluding
    /// itself. Default is a generated library with held-out queries.
    #[arg(long)]
    pub lib: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub queries: usize,
    /// Comma-separated K values (sweep-scale uses exactly one).
    #[arg(long, value_delimiter = ',')]
    pub k: Vec<usize>,
    /// Metric of sweep-topk and sweep-scale; restricts sweep-metric.
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
    /// Restricts the modes swept (sweep-topk) or selects the mode
    /// (others; default agnostic).
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Comma-separated library fractions in (0, 1].
    #[arg(long, value_delimiter = ',')]
    pub fractions: Vec<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub d_h: usize,
    #[arg(long, default_value_t = 5)]
    pub len: usize,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    /// Per-parameter report CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `MRFL_DIM_OVERRIDE`.
pub fn parse_dim_override(value: &str) -> Result<Schema> {
    let bad = || Error::Config(format!("{DIM_OVERRIDE_VAR}={value:?}: expected one dim or five comma-separated dims"));
    let dims = value.split(',').map(|d| d.trim().parse::<u32>().map_err(|_| bad())).collect::<Result<Vec<_>>>()?;
    match dims[..] {
        [d] => Schema::uniform(d),
        [a, b, c, d, e] => Schema::new([a, b, c, d, e]),
        _ => Err(bad()),
    }
    .map_err(|_| bad())
}

pub fn dim_override() -> Result<Option<Schema>> {
    match std::env::var(DIM_OVERRIDE_VAR) {
        Ok(v) => parse_dim_override(&v).map(Some),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(Error::Config(format!("{DIM_OVERRIDE_VAR}: {e}"))),
    }
}

fn load_lib(path: &Path) -> Result<FootageLibrary> {
    match dim_override()? {
        Some(schema) => load_library_expecting(path, &schema),
        None => load_library(path),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenSynthetic(a) => gen_synthetic(&a),
        Command::Ingest(a) => ingest(&a),
        Command::Retrieve(a) => retrieve(&a),
        Command::Encode(a) => encode(&a),
        Command::TrainToy(a) => train(&a),
        Command::SweepTopk(a) => sweep(&a, SweepKind::TopK),
        Command::SweepMetric(a) => sweep(&a, SweepKind::Metric),
        Command::SweepScale(a) => sweep(&a, SweepKind::Scale),
        Command::GradCheck(a) => grad_check(&a),
    }
}

fn gen_synthetic(a: &GenArgs) -> Result<()> {
    let schema = dim_override()?.unwrap_or_default();
    save_library(&generate_library(&a.cluster.config(schema))?, &a.out)
}

fn ingest(a: &IngestArgs) -> Result<()> {
    let lib = read_records(BufReader::new(File::open(&a.input)?), dim_override()?)?;
    save_library(&lib, &a.out)
}

fn retrieve(a: &RetrieveArgs) -> Result<()> {
    let lib = load_lib(&a.lib)?;
    let queries: Vec<FootageRecord> = match (&a.queries, a.query_id.is_empty()) {
        (Some(path), _) => read_records(BufReader::new(File::open(path)?), Some(*lib.schema()))?.records().to_vec(),
        (None, false) => a.query_id.iter().map(|&id| lib.lookup(id).cloned()).collect::<Result<_>>()?,
        (None, true) => lib.records().to_vec(),
    };
    let cfg = RetrievalConfig { k: a.k, metric: a.metric.into(), mode: a.mode.into() };
    if cfg.k == 0 {
        return Err(Error::Argument("retrieval width --k must be >= 1".into()));
    }
    let mut w = output(a.out.as_deref())?;
    writeln!(w, "query_id,modality,rank,record_id,score,speaker_id")?;
    for q in &queries {
        let result = retrieve_all(&lib, &Query::from_record(q), &cfg)?;
        for r in result.iter() {
            for (rank, hit) in r.hits.iter().enumerate() {
                let speaker = &lib.lookup(hit.record_id)?.speaker_id;
                writeln!(
                    w,
                    "{},{},{},{},{:.16e},{}",
                    q.record_id,
                    r.modality.name(),
                    rank + 1,
                    hit.record_id,
                    hit.score,
                    speaker
                )?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Batch and the schema its projections need.
fn fixture(a: &FixtureArgs, d_h: usize) -> Result<(Schema, ToyBatch)> {
    let schema = dim_override()?.unwrap_or_default();
    let mut cfg = FixtureConfig::new(a.seed, a.len, a.k, schema);
    cfg.retrieval.metric = a.metric.into();
    cfg.retrieval.mode = a.mode.into();
    match &a.lib {
        None => Ok((schema, toy_fixture(&cfg, d_h, a.n_mel)?.batch)),
        Some(path) => {
            let lib = load_lib(path)?;
            let query = match a.query_id {
                Some(id) => lib.lookup(id)?,
                None => lib.records().first().ok_or_else(|| Error::Schema("library is empty".into()))?,
            };
            Ok((*lib.schema(), toy_batch(&lib, query, &cfg, d_h, a.n_mel)?))
        }
    }
}

fn model(schema: Schema, d_h: usize, n_mel: usize, seed: u64) -> Result<DubberModel> {
    DubberModel::new(ModelConfig { n_mel, ..ModelConfig::new(schema, d_h) }, seed)
}

#[derive(Serialize)]
struct StageDump {
    #[serde(flatten)]
    topology: Topology,
    #[serde(skip_serializing_if = "Option::is_none")]
    features: Option<Vec<Vec<f64>>>,
}

#[derive(Serialize)]
struct EncodeDump {
    d_h: usize,
    k: usize,
    stages: Vec<StageDump>,
}

fn encode(a: &EncodeArgs) -> Result<()> {
    let (schema, batch) = fixture(&a.fixture, a.d_h)?;
    let model = model(schema, a.d_h, a.fixture.n_mel, a.fixture.seed)?;
    let mut tape = Tape::new(&model.store);
    let out = model.encoder.encode(&mut tape, &batch.basic, &batch.retrieval)?;
    let stages = out
        .graphs()
        .iter()
        .map(|g| StageDump {
            topology: g.topology.clone(),
            features: a.features.then(|| {
                let m = tape.value(g.features);
                (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
            }),
        })
        .collect();
    let mut w = output(a.out.as_deref())?;
    serde_json::to_writer_pretty(&mut w, &EncodeDump { d_h: a.d_h, k: a.fixture.k, stages })?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn train(a: &TrainArgs) -> Result<()> {
    let (schema, batch) = fixture(&a.fixture, a.d_h)?;
    let mut model = model(schema, a.d_h, a.fixture.n_mel, a.fixture.seed)?;
    let losses = train_toy(&mut model, &batch, a.steps, AdamConfig::default())?;
    let mut w = output(Some(&a.out))?;
    writeln!(w, "step,loss")?;
    for (i, l) in losses.iter().enumerate() {
        writeln!(w, "{i},{l}")?;
    }
    w.flush()?;
    let ckpt = a.checkpoint.clone().unwrap_or_else(|| a.out.with_extension("adpk"));
    save_checkpoint(&model.store, ckpt)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SweepKind {
    TopK,
    Metric,
    Scale,
}

fn sweep(a: &SweepArgs, kind: SweepKind) -> Result<()> {
    let schema = dim_override()?.unwrap_or_default();
    let mut cfg = SweepConfig { library: a.cluster.config(schema), queries: a.queries, ..SweepConfig::default() };
    if !a.k.is_empty() {
        cfg.ks = a.k.clone();
    }
    if kind == SweepKind::Scale {
        match a.k[..] {
            [] => {}
            [k] => cfg.scale_k = k,
            _ => return Err(Error::Argument("sweep-scale takes a single --k".into())),
        }
    }
    if let Some(m) = a.metric {
        cfg.metric = m.into();
        cfg.metrics = vec![m.into()];
    }
    cfg.modes = match (a.mode, kind) {
        (Some(m), _) => vec![m.into()],
        (None, SweepKind::TopK) => cfg.modes,
        (None, _) => vec![RetrievalMode::SpeakerAgnostic],
    };
    if !a.fractions.is_empty() {
        cfg.fractions = a.fractions.clone();
    }
    cfg.validate()?;
    let (lib, queries) = match &a.lib {
        Some(path) => {
            let lib = load_lib(path)?;
            let queries = lib.records().iter().take(a.queries).cloned().collect();
            (lib, queries)
        }
        None => cfg.generate()?,
    };
    let mut w = output(a.out.as_deref())?;
    match kind {
        SweepKind::TopK => write_topk_csv(&mut w, &sweep_topk(&lib, &queries, &cfg)?)?,
        SweepKind::Metric => write_metric_csv(&mut w, &sweep_metric(&lib, &queries, &cfg)?)?,
        SweepKind::Scale => write_scale_csv(&mut w, &sweep_scale(&lib, &queries, &cfg)?)?,
    }
    w.flush()?;
    Ok(())
}

fn grad_check(a: &GradArgs) -> Result<()> {
    let spec = PipelineCheck { seed: a.seed, d_h: a.d_h, len: a.len, k: a.k, ..PipelineCheck::default() };
    let report = pipeline_grad_check(&spec, GradCheckConfig::default())?;
    let mut w = output(a.out.as_deref())?;
    writeln!(w, "param,max_rel_error,max_abs_error,grad_max_abs")?;
    for p in &report.params {
        writeln!(w, "{},{},{},{}", p.name, p.max_rel_error, p.max_abs_error, p.grad_max_abs)?;
    }
    w.flush()?;
    if report.max_rel_error >= GRAD_CHECK_TOLERANCE {
        let worst = report.worst().map_or("", |p| p.name.as_str());
        return Err(Error::Numeric(format!(
            "max relative error {:e} at {worst} exceeds {GRAD_CHECK_TOLERANCE:e}",
            report.max_rel_error
        )));
    }
    Ok(())
}
