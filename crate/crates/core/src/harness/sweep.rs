//! Surrogate retrieval sweeps over K, metric and library scale.
//!
//! "Purity" is the fraction of retrieved records whose emotion label equals
//! the query's, pooled over the scene, face and text channels of every
//! query. It is a synthetic stand-in, not an emotion-accuracy score.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::footage::{
    generate_held_out, generate_library, ClusterConfig, FootageLibrary, FootageRecord, SpeakerLayout,
};
use crate::retrieval::{retrieve_all, Query, RetrievalConfig, RetrievalMode, SimilarityMetric, DEFAULT_K};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub library: ClusterConfig,
    /// Held-out queries drawn from the library's clusters.
    pub queries: usize,
    pub ks: Vec<usize>,
    pub modes: Vec<RetrievalMode>,
    /// Metric of the top-K and scale sweeps.
    pub metric: SimilarityMetric,
    pub metrics: Vec<SimilarityMetric>,
    pub fractions: Vec<f64>,
    /// Retrieval width of the scale sweep.
    pub scale_k: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            library: ClusterConfig::default(),
            queries: 100,
            ks: (1..=8).collect(),
            modes: vec![RetrievalMode::SpeakerAgnostic, RetrievalMode::SpeakerSpecific],
            metric: SimilarityMetric::Cosine,
            metrics: SimilarityMetric::ALL.to_vec(),
            fractions: (1..=10).map(|i| i as f64 / 10.0).collect(),
            scale_k: DEFAULT_K,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let empty = |what: &str| Err(Error::Argument(format!("sweep {what} list is empty")));
        if self.ks.is_empty() {
            return empty("K");
        }
        if self.modes.is_empty() {
            return empty("mode");
        }
        if self.metrics.is_empty() {
            return empty("metric");
        }
        if self.fractions.is_empty() {
            return empty("fraction");
        }
        if self.queries == 0 {
            return Err(Error::Argument("sweep needs at least one query".into()));
        }
        if let Some(k) = self.ks.iter().chain([&self.scale_k]).find(|&&k| k == 0) {
            return Err(Error::Argument(format!("K = {k} must be >= 1")));
        }
        if let Some(f) = self.fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return Err(Error::Argument(format!("fraction {f} outside (0, 1]")));
        }
        Ok(())
    }

    pub fn held_out_queries(&self) -> Result<Vec<FootageRecord>> {
        generate_held_out(&self.library, self.queries)
    }

    pub fn generate(&self) -> Result<(FootageLibrary, Vec<FootageRecord>)> {
        self.validate()?;
        Ok((generate_library(&self.library)?, self.held_out_queries()?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PurityStats {
    pub purity: f64,
    pub mean_score: f64,
    /// Hits pooled over all queries and channels.
    pub retrieved: usize,
}

/// Retrieves for every labeled query and pools label agreement over the
/// three channels. Each query excludes its own record id.
pub fn evaluate_purity(lib: &FootageLibrary, queries: &[FootageRecord], cfg: &RetrievalConfig) -> Result<PurityStats> {
    let (mut matches, mut total, mut score_sum) = (0usize, 0usize, 0.0);
    for q in queries {
        let Some(label) = q.emotion_label.as_deref() else { continue };
        let result = retrieve_all(lib, &Query::from_record(q), cfg)?;
        for hit in result.iter().flat_map(|r| &r.hits) {
            total += 1;
            score_sum += hit.score;
            if lib.lookup(hit.record_id)?.emotion_label.as_deref() == Some(label) {
                matches += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::Argument("no labeled query retrieved anything".into()));
    }
    Ok(PurityStats { purity: matches as f64 / total as f64, mean_score: score_sum / total as f64, retrieved: total })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopKRow {
    pub k: usize,
    pub mode: RetrievalMode,
    pub purity: f64,
    pub mean_score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRow {
    pub metric: SimilarityMetric,
    pub k: usize,
    pub purity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleRow {
    pub fraction: f64,
    pub purity: f64,
}

/// Rows ordered by K, then mode in config order.
pub fn sweep_topk(lib: &FootageLibrary, queries: &[FootageRecord], cfg: &SweepConfig) -> Result<Vec<TopKRow>> {
    cfg.validate()?;
    let points: Vec<(usize, RetrievalMode)> =
        cfg.ks.iter().flat_map(|&k| cfg.modes.iter().map(move |&m| (k, m))).collect();
    points
        .into_par_iter()
        .map(|(k, mode)| {
            let s = evaluate_purity(lib, queries, &RetrievalConfig { k, metric: cfg.metric, mode })?;
            Ok(TopKRow { k, mode, purity: s.purity, mean_score: s.mean_score })
        })
        .collect()
}

/// Rows ordered by metric in config order, then K; mode is the first
/// configured one.
pub fn sweep_metric(lib: &FootageLibrary, queries: &[FootageRecord], cfg: &SweepConfig) -> Result<Vec<MetricRow>> {
    cfg.validate()?;
    let mode = cfg.modes[0];
    let points: Vec<(SimilarityMetric, usize)> =
        cfg.metrics.iter().flat_map(|&m| cfg.ks.iter().map(move |&k| (m, k))).collect();
    points
        .into_par_iter()
        .map(|(metric, k)| {
            let s = evaluate_purity(lib, queries, &RetrievalConfig { k, metric, mode })?;
            Ok(MetricRow { metric, k, purity: s.purity })
        })
        .collect()
}

/// One row per fraction in config order. Each subsample is drawn with the
/// library seed.
pub fn sweep_scale(lib: &FootageLibrary, queries: &[FootageRecord], cfg: &SweepConfig) -> Result<Vec<ScaleRow>> {
    cfg.validate()?;
    let rc = RetrievalConfig { k: cfg.scale_k, metric: cfg.metric, mode: cfg.modes[0] };
    cfg.fractions
        .par_iter()
        .map(|&fraction| {
            let sub = lib.subsample(fraction, cfg.library.seed)?;
            Ok(ScaleRow { fraction, purity: evaluate_purity(&sub, queries, &rc)?.purity })
        })
        .collect()
}

pub fn write_topk_csv(mut w: impl Write, rows: &[TopKRow]) -> Result<()> {
    writeln!(w, "K,mode,purity,mean_score")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.k, r.mode.name(), r.purity, r.mean_score)?;
    }
    Ok(())
}

pub fn write_metric_csv(mut w: impl Write, rows: &[MetricRow]) -> Result<()> {
    writeln!(w, "metric,K,purity")?;
    for r in rows {
        writeln!(w, "{},{},{}", r.metric.name(), r.k, r.purity)?;
    }
    Ok(())
}

pub fn write_scale_csv(mut w: impl Write, rows: &[ScaleRow]) -> Result<()> {
    writeln!(w, "fraction,purity")?;
    for r in rows {
        writeln!(w, "{},{}", r.fraction, r.purity)?;
    }
    Ok(())
}

/// Clusters voiced by one speaker each, so speaker filtering also filters
/// by label.
pub fn per_cluster_speakers(mut cfg: ClusterConfig) -> ClusterConfig {
    cfg.speaker_layout = SpeakerLayout::PerCluster;
    cfg
}
