//! Oracles and random fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use dubber_core::footage::{EmotionVector, FootageLibrary, FootageRecord, Modality, Schema};
use dubber_core::retrieval::{score, Hit, Query, QueryModality, RetrievalMode, SimilarityMetric};
use dubber_core::rng::KeyedRng;
use rand::Rng;

/// Direct formula evaluation, written independently of the library.
pub fn oracle_similarity(metric: SimilarityMetric, a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    let mut sq = 0.0;
    for i in 0..a.len() {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
        sq += (a[i] - b[i]).powi(2);
    }
    match metric {
        SimilarityMetric::Cosine => dot / (na.sqrt() * nb.sqrt()),
        SimilarityMetric::DotProduct => dot,
        SimilarityMetric::NegEuclidean => -sq.sqrt(),
    }
}

pub fn oracle_score(q: &Query, r: &FootageRecord, m: QueryModality, metric: SimilarityMetric) -> f64 {
    match m {
        QueryModality::Scene => oracle_similarity(metric, q.scene.values(), r.scene.values()),
        QueryModality::Face => oracle_similarity(metric, q.face.values(), r.face.values()),
        QueryModality::Text => {
            0.5 * (oracle_similarity(metric, q.text_self.values(), r.text_self.values())
                + oracle_similarity(metric, q.text_react.values(), r.text_react.values()))
        }
    }
}

/// Scores every eligible record, sorts the whole list by (score desc, id
/// asc) and truncates to `k`.
pub fn brute_force(
    lib: &FootageLibrary,
    q: &Query,
    m: QueryModality,
    k: usize,
    metric: SimilarityMetric,
    mode: RetrievalMode,
) -> Vec<Hit> {
    let mut all: Vec<Hit> = lib
        .records()
        .iter()
        .filter(|r| !q.exclude_ids.contains(&r.record_id))
        .filter(|r| mode == RetrievalMode::SpeakerAgnostic || Some(&r.speaker_id) == q.speaker_id.as_ref())
        .map(|r| Hit { record_id: r.record_id, score: score(q, r, m, metric).unwrap() })
        .collect();
    all.sort_by(|a, b| {
        if a.score > b.score {
            std::cmp::Ordering::Less
        } else if a.score < b.score {
            std::cmp::Ordering::Greater
        } else {
            a.record_id.cmp(&b.record_id)
        }
    });
    all.truncate(k);
    all
}

pub fn random_vec(rng: &mut KeyedRng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        if v.iter().any(|x| *x != 0.0) {
            return v;
        }
    }
}

pub fn random_schema(rng: &mut KeyedRng, max_dim: u32) -> Schema {
    let mut d = || rng.random_range(1..=max_dim);
    Schema::new([d(), d(), d(), d(), d()]).unwrap()
}

/// `n` records with sparse ids, `speakers` speaker ids, and about
/// `dup_rate` of records copying an earlier record's vectors.
pub fn random_library(rng: &mut KeyedRng, schema: Schema, n: usize, speakers: usize, dup_rate: f64) -> FootageLibrary {
    let mut lib = FootageLibrary::new(schema);
    let mut next_id = rng.random_range(0..1000u64);
    for i in 0..n {
        let vecs: Vec<EmotionVector> = if i > 0 && rng.unit() < dup_rate {
            let src = &lib.records()[rng.random_range(0..i)];
            Modality::ALL.iter().map(|&m| src.vector(m).clone()).collect()
        } else {
            Modality::ALL.iter().map(|&m| EmotionVector::new(m, random_vec(rng, schema.dim(m))).unwrap()).collect()
        };
        let mut it = vecs.into_iter();
        let rec = FootageRecord::from_vectors(
            next_id,
            format!("m{}", rng.random_range(0..5)),
            format!("s{}", rng.random_range(0..speakers)),
            Some(format!("e{}", rng.random_range(0..4))),
            it.next().unwrap(),
            it.next().unwrap(),
            it.next().unwrap(),
            it.next().unwrap(),
            it.next().unwrap(),
        )
        .unwrap();
        lib.insert(rec).unwrap();
        next_id += rng.random_range(1..4u64);
    }
    lib
}

/// Query with fresh vectors (or a library record's), a random speaker and
/// a random subset of library ids excluded.
pub fn random_query(rng: &mut KeyedRng, lib: &FootageLibrary, speakers: usize) -> Query {
    let schema = *lib.schema();
    let v = |rng: &mut KeyedRng, m: Modality| EmotionVector::new(m, random_vec(rng, schema.dim(m))).unwrap();
    let mut q = if !lib.is_empty() && rng.unit() < 0.3 {
        Query::from_record(&lib.records()[rng.random_range(0..lib.len())])
    } else {
        Query {
            scene: v(rng, Modality::Scene),
            face: v(rng, Modality::Face),
            text_self: v(rng, Modality::TextSelf),
            text_react: v(rng, Modality::TextReact),
            speaker_id: None,
            exclude_ids: BTreeSet::new(),
        }
    };
    q.speaker_id = Some(format!("s{}", rng.random_range(0..speakers)));
    for r in lib.records() {
        if rng.unit() < 0.05 {
            q.exclude_ids.insert(r.record_id);
        }
    }
    q
}

pub fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}
