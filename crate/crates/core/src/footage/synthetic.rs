//! Clustered synthetic libraries for retrieval experiments.
//!
//! Each emotion label owns one centroid per modality. Members are drawn as
//! `centroid + noise` with isotropic Gaussian noise whose RMS distance from
//! the centroid is `sigma` (per-coordinate std `sigma / sqrt(dim)`).
//! Centroids are placed so that every pair of centroids is exactly
//! `separation · sigma` apart when `clusters <= dim` (scaled axis vectors);
//! with more clusters than dims, random directions are scaled until the
//! closest pair is `separation · sigma` apart.

use crate::error::{Error, Result};
use crate::rng::{Key, KeyedRng};

use super::library::FootageLibrary;
use super::record::FootageRecord;
use super::vector::{EmotionVector, Modality, Schema};

/// How speakers are assigned to synthetic records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpeakerLayout {
    /// Uniformly random among `speakers`.
    #[default]
    Random,
    /// Speaker `spk{label}`: every cluster is voiced by its own speaker.
    PerCluster,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterConfig {
    pub seed: u64,
    pub n: usize,
    pub clusters: usize,
    /// Centroid separation in units of `sigma`.
    pub separation: f64,
    pub sigma: f64,
    pub schema: Schema,
    pub speakers: usize,
    pub speaker_layout: SpeakerLayout,
    pub movies: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            seed: 0,
            n: 200,
            clusters: 4,
            separation: 6.0,
            sigma: 1.0,
            schema: Schema::default(),
            speakers: 8,
            speaker_layout: SpeakerLayout::Random,
            movies: 26,
        }
    }
}

impl ClusterConfig {
    fn validate(&self) -> Result<()> {
        if self.clusters == 0 {
            return Err(Error::Argument("cluster count must be positive".into()));
        }
        if self.speakers == 0 || self.movies == 0 {
            return Err(Error::Argument("speaker and movie counts must be positive".into()));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(Error::Argument(format!("separation {} must be finite and >= 0", self.separation)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Argument(format!("sigma {} must be finite and > 0", self.sigma)));
        }
        Ok(())
    }

    pub fn label(cluster: usize) -> String {
        format!("emo{cluster}")
    }
}

fn centroids(cfg: &ClusterConfig, modality: Modality) -> Vec<Vec<f64>> {
    let dim = cfg.schema.dim(modality);
    let dist = cfg.separation * cfg.sigma;
    let mut rng = KeyedRng::new(cfg.seed, &[Key::Str("centroids"), Key::Str(modality.name())]);
    if cfg.clusters <= dim {
        let axes = rand::seq::index::sample(&mut rng, dim, cfg.clusters).into_vec();
        let radius = dist / std::f64::consts::SQRT_2;
        return axes
            .into_iter()
            .map(|a| {
                let mut c = vec![0.0; dim];
                c[a] = radius;
                c
            })
            .collect();
    }
    let dirs: Vec<Vec<f64>> = (0..cfg.clusters)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / n).collect()
        })
        .collect();
    let mut min_d = f64::INFINITY;
    for i in 0..dirs.len() {
        for j in i + 1..dirs.len() {
            let d = dirs[i].iter().zip(&dirs[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            min_d = min_d.min(d);
        }
    }
    let scale = if min_d > 0.0 { dist / min_d } else { 0.0 };
    dirs.into_iter().map(|v| v.into_iter().map(|x| x * scale).collect()).collect()
}

/// Generates `count` records in stream `namespace`, ids starting at `first_id`.
///
/// Record `i` belongs to cluster `i mod clusters`. Different namespaces
/// share centroids but draw independent noise, which is how held-out
/// queries are produced.
pub fn generate_records(
    cfg: &ClusterConfig,
    namespace: &str,
    first_id: u64,
    count: usize,
) -> Result<Vec<FootageRecord>> {
    cfg.validate()?;
    let cents: Vec<Vec<Vec<f64>>> = Modality::ALL.iter().map(|&m| centroids(cfg, m)).collect();
    (0..count)
        .map(|i| {
            let id = first_id + i as u64;
            let cluster = i % cfg.clusters;
            let mut rng = KeyedRng::new(cfg.seed, &[Key::Str(namespace), Key::Int(id)]);
            let mut vecs = Vec::with_capacity(5);
            for m in Modality::ALL {
                let dim = cfg.schema.dim(m);
                let sd = cfg.sigma / (dim as f64).sqrt();
                let c = &cents[m.index()][cluster];
                let values = c.iter().map(|&x| x + sd * rng.normal()).collect();
                vecs.push(EmotionVector::new(m, values)?);
            }
            let speaker = match cfg.speaker_layout {
                SpeakerLayout::Random => format!("spk{}", (rng.unit() * cfg.speakers as f64) as usize),
                SpeakerLayout::PerCluster => format!("spk{cluster}"),
            };
            let movie = format!("movie{}", (rng.unit() * cfg.movies as f64) as usize);
            let mut it = vecs.into_iter();
            let mut next = || it.next().unwrap();
            FootageRecord::from_vectors(
                id,
                movie,
                speaker,
                Some(ClusterConfig::label(cluster)),
                next(),
                next(),
                next(),
                next(),
                next(),
            )
        })
        .collect()
}

/// Library of `cfg.n` records with ids `0..n`.
pub fn generate_library(cfg: &ClusterConfig) -> Result<FootageLibrary> {
    FootageLibrary::from_records(cfg.schema, generate_records(cfg, "library", 0, cfg.n)?)
}

/// Held-out records drawn from the library's clusters, ids from `1 << 32`.
pub fn generate_held_out(cfg: &ClusterConfig, count: usize) -> Result<Vec<FootageRecord>> {
    generate_records(cfg, "held-out", 1 << 32, count)
}
