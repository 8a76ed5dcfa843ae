//! Emotion-similarity retrieval over a footage library.
//!
//! The target's scene, face and text emotions are issued as three separate
//! queries. Scene and face are scored by a single similarity; text is scored
//! by the mean of the self-half and react-half similarities. Each hit also
//! yields the record's audio vector, looked up by record id.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::footage::{EmotionVector, FootageLibrary, FootageRecord, Modality};

/// Default retrieval width.
pub const DEFAULT_K: usize = 3;

/// Similarity used for ranking; larger is always more similar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub enum SimilarityMetric {
    #[default]
    Cosine,
    DotProduct,
    /// Negated Euclidean distance.
    NegEuclidean,
}

impl SimilarityMetric {
    pub const ALL: [SimilarityMetric; 3] =
        [SimilarityMetric::Cosine, SimilarityMetric::DotProduct, SimilarityMetric::NegEuclidean];

    pub fn name(self) -> &'static str {
        match self {
            SimilarityMetric::Cosine => "cosine",
            SimilarityMetric::DotProduct => "dot",
            SimilarityMetric::NegEuclidean => "euclid",
        }
    }
}

impl fmt::Display for SimilarityMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SimilarityMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(SimilarityMetric::Cosine),
            "dot" => Ok(SimilarityMetric::DotProduct),
            "euclid" => Ok(SimilarityMetric::NegEuclidean),
            _ => Err(Error::Argument(format!("unknown metric {s:?} (cosine, dot, euclid)"))),
        }
    }
}

/// Whether candidates are restricted to the query's speaker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub enum RetrievalMode {
    #[default]
    SpeakerAgnostic,
    SpeakerSpecific,
}

impl RetrievalMode {
    pub fn name(self) -> &'static str {
        match self {
            RetrievalMode::SpeakerAgnostic => "agnostic",
            RetrievalMode::SpeakerSpecific => "specific",
        }
    }
}

impl fmt::Display for RetrievalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RetrievalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "agnostic" => Ok(RetrievalMode::SpeakerAgnostic),
            "specific" => Ok(RetrievalMode::SpeakerSpecific),
            _ => Err(Error::Argument(format!("unknown mode {s:?} (agnostic, specific)"))),
        }
    }
}

/// The three query channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryModality {
    Scene,
    Face,
    Text,
}

impl QueryModality {
    pub const ALL: [QueryModality; 3] = [QueryModality::Scene, QueryModality::Face, QueryModality::Text];

    pub fn name(self) -> &'static str {
        match self {
            QueryModality::Scene => "scene",
            QueryModality::Face => "face",
            QueryModality::Text => "text",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for QueryModality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The target utterance's basic emotion, issued as retrieval queries.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub scene: EmotionVector,
    pub face: EmotionVector,
    pub text_self: EmotionVector,
    pub text_react: EmotionVector,
    pub speaker_id: Option<String>,
    pub exclude_ids: BTreeSet<u64>,
}

impl Query {
    /// Query built from a record's own vectors, excluding the record itself.
    pub fn from_record(r: &FootageRecord) -> Self {
        Query {
            scene: r.scene.clone(),
            face: r.face.clone(),
            text_self: r.text_self.clone(),
            text_react: r.text_react.clone(),
            speaker_id: Some(r.speaker_id.clone()),
            exclude_ids: BTreeSet::from([r.record_id]),
        }
    }

    /// `text_self ‖ text_react`.
    pub fn text_concat(&self) -> Vec<f64> {
        let mut t = self.text_self.values().to_vec();
        t.extend_from_slice(self.text_react.values());
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub record_id: u64,
    pub score: f64,
}

/// Ranked hits of one query channel with their indirect and matched audio
/// vectors, all in rank order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityRetrieval {
    pub modality: QueryModality,
    pub hits: Vec<Hit>,
    /// Scene/face vectors, or `text_self ‖ text_react` for the text channel.
    pub indirect: Vec<Vec<f64>>,
    pub matched_audio: Vec<Vec<f64>>,
}

impl ModalityRetrieval {
    pub fn empty(modality: QueryModality) -> Self {
        ModalityRetrieval { modality, hits: Vec::new(), indirect: Vec::new(), matched_audio: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    pub scene: ModalityRetrieval,
    pub face: ModalityRetrieval,
    pub text: ModalityRetrieval,
}

impl RetrievalResult {
    pub fn empty() -> Self {
        RetrievalResult {
            scene: ModalityRetrieval::empty(QueryModality::Scene),
            face: ModalityRetrieval::empty(QueryModality::Face),
            text: ModalityRetrieval::empty(QueryModality::Text),
        }
    }

    pub fn get(&self, m: QueryModality) -> &ModalityRetrieval {
        match m {
            QueryModality::Scene => &self.scene,
            QueryModality::Face => &self.face,
            QueryModality::Text => &self.text,
        }
    }

    pub fn get_mut(&mut self, m: QueryModality) -> &mut ModalityRetrieval {
        match m {
            QueryModality::Scene => &mut self.scene,
            QueryModality::Face => &mut self.face,
            QueryModality::Text => &mut self.text,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &ModalityRetrieval> {
        [&self.scene, &self.face, &self.text].into_iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetrievalConfig {
    pub k: usize,
    pub metric: SimilarityMetric,
    pub mode: RetrievalMode,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig { k: DEFAULT_K, metric: SimilarityMetric::Cosine, mode: RetrievalMode::SpeakerAgnostic }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Similarity between two equal-length vectors.
pub fn similarity(metric: SimilarityMetric, a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Schema(format!("similarity between dims {} and {}", a.len(), b.len())));
    }
    match metric {
        SimilarityMetric::Cosine => {
            let na = dot(a, a).sqrt();
            let nb = dot(b, b).sqrt();
            if na == 0.0 || nb == 0.0 {
                return Err(Error::Argument("cosine similarity with a zero-norm vector".into()));
            }
            Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
        }
        SimilarityMetric::DotProduct => Ok(dot(a, b)),
        SimilarityMetric::NegEuclidean => Ok(-a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()),
    }
}

/// Mean of the self-half and react-half similarities.
pub fn text_criterion(
    q_self: &[f64],
    q_react: &[f64],
    r_self: &[f64],
    r_react: &[f64],
    metric: SimilarityMetric,
) -> Result<f64> {
    Ok((similarity(metric, q_self, r_self)? + similarity(metric, q_react, r_react)?) / 2.0)
}

/// Score of one record for one query channel.
pub fn score(query: &Query, record: &FootageRecord, modality: QueryModality, metric: SimilarityMetric) -> Result<f64> {
    match modality {
        QueryModality::Scene => similarity(metric, query.scene.values(), record.scene.values()),
        QueryModality::Face => similarity(metric, query.face.values(), record.face.values()),
        QueryModality::Text => text_criterion(
            query.text_self.values(),
            query.text_react.values(),
            record.text_self.values(),
            record.text_react.values(),
            metric,
        ),
    }
}

/// The ranking order: score descending, then record id ascending.
pub fn rank_order(a: &Hit, b: &Hit) -> std::cmp::Ordering {
    b.score.total_cmp(&a.score).then(a.record_id.cmp(&b.record_id))
}

fn check_query(lib: &FootageLibrary, query: &Query) -> Result<()> {
    let schema = lib.schema();
    for v in [&query.scene, &query.face, &query.text_self, &query.text_react] {
        schema.check(v)?;
    }
    Ok(())
}

/// Top-`k` records for one query channel by exhaustive scan.
///
/// Candidates are all records not in `query.exclude_ids`, further
/// restricted to `query.speaker_id` in speaker-specific mode. Fewer than
/// `k` hits come back only when there are fewer candidates.
pub fn retrieve_modality(
    lib: &FootageLibrary,
    query: &Query,
    modality: QueryModality,
    k: usize,
    metric: SimilarityMetric,
    mode: RetrievalMode,
) -> Result<Vec<Hit>> {
    if k == 0 {
        return Err(Error::Argument("retrieval width k must be >= 1".into()));
    }
    check_query(lib, query)?;
    let speaker = match mode {
        RetrievalMode::SpeakerAgnostic => None,
        RetrievalMode::SpeakerSpecific => Some(
            query
                .speaker_id
                .as_deref()
                .ok_or_else(|| Error::Argument("speaker-specific retrieval needs a query speaker id".into()))?,
        ),
    };
    let mut hits = lib
        .records()
        .iter()
        .filter(|r| !query.exclude_ids.contains(&r.record_id))
        .filter(|r| speaker.is_none_or(|s| r.speaker_id == s))
        .map(|r| Ok(Hit { record_id: r.record_id, score: score(query, r, modality, metric)? }))
        .collect::<Result<Vec<_>>>()?;
    if hits.len() > k {
        hits.select_nth_unstable_by(k - 1, rank_order);
        hits.truncate(k);
    }
    hits.sort_unstable_by(rank_order);
    Ok(hits)
}

/// Runs all three channels and attaches indirect and matched audio vectors.
pub fn retrieve_all(lib: &FootageLibrary, query: &Query, cfg: &RetrievalConfig) -> Result<RetrievalResult> {
    let mut out = RetrievalResult::empty();
    for m in QueryModality::ALL {
        let hits = retrieve_modality(lib, query, m, cfg.k, cfg.metric, cfg.mode)?;
        let slot = out.get_mut(m);
        for h in &hits {
            let rec = lib.lookup(h.record_id)?;
            slot.indirect.push(match m {
                QueryModality::Scene => rec.vector(Modality::Scene).values().to_vec(),
                QueryModality::Face => rec.vector(Modality::Face).values().to_vec(),
                QueryModality::Text => rec.text_concat(),
            });
            slot.matched_audio.push(rec.audio.values().to_vec());
        }
        slot.hits = hits;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::footage::Schema;

    const EPS: f64 = 1e-12;

    fn ev(m: Modality, v: &[f64]) -> EmotionVector {
        EmotionVector::new(m, v.to_vec()).unwrap()
    }

    fn rec(id: u64, speaker: &str, scene: &[f64]) -> FootageRecord {
        FootageRecord::from_vectors(
            id,
            "m",
            speaker,
            None,
            ev(Modality::Scene, scene),
            ev(Modality::Face, &[1.0, 0.0]),
            ev(Modality::TextSelf, &[1.0, 0.0]),
            ev(Modality::TextReact, &[0.0, 1.0]),
            ev(Modality::Audio, &[id as f64, 1.0]),
        )
        .unwrap()
    }

    fn query(scene: &[f64]) -> Query {
        Query {
            scene: ev(Modality::Scene, scene),
            face: ev(Modality::Face, &[1.0, 0.0]),
            text_self: ev(Modality::TextSelf, &[1.0, 0.0]),
            text_react: ev(Modality::TextReact, &[0.0, 1.0]),
            speaker_id: Some("a".into()),
            exclude_ids: BTreeSet::new(),
        }
    }

    #[test]
    fn cosine_examples() {
        let c = SimilarityMetric::Cosine;
        assert!((similarity(c, &[0.3, -2.0, 5.0], &[0.3, -2.0, 5.0]).unwrap() - 1.0).abs() < EPS);
        assert_eq!(similarity(c, &[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((similarity(c, &[1.0, 0.0], &[1.0, 1.0]).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < EPS);
    }

    #[test]
    fn euclid_and_dot() {
        assert_eq!(similarity(SimilarityMetric::NegEuclidean, &[1.0, 2.0], &[4.0, 6.0]).unwrap(), -5.0);
        assert_eq!(similarity(SimilarityMetric::DotProduct, &[1.0, 2.0], &[4.0, 6.0]).unwrap(), 16.0);
    }

    #[test]
    fn similarity_errors() {
        assert!(matches!(similarity(SimilarityMetric::Cosine, &[1.0], &[1.0, 2.0]), Err(Error::Schema(_))));
        assert!(matches!(similarity(SimilarityMetric::Cosine, &[0.0, 0.0], &[1.0, 2.0]), Err(Error::Argument(_))));
        assert!(similarity(SimilarityMetric::DotProduct, &[0.0, 0.0], &[1.0, 2.0]).is_ok());
    }

    #[test]
    fn text_criterion_examples() {
        // cos = 0.8 and cos = 0.6 by construction.
        let s = text_criterion(&[1.0, 0.0], &[1.0, 0.0], &[0.8, 0.6], &[0.6, 0.8], SimilarityMetric::Cosine).unwrap();
        assert!((s - 0.7).abs() < EPS);
        let t = text_criterion(&[1.0, 2.0], &[3.0, 1.0], &[1.0, 2.0], &[3.0, 1.0], SimilarityMetric::Cosine).unwrap();
        assert!((t - 1.0).abs() < EPS);
    }

    fn three() -> FootageLibrary {
        // Cosine scores against (1, 0): 0.9, 0.5, 0.1.
        let mk = |c: f64| [c, (1.0 - c * c).sqrt()];
        FootageLibrary::from_records(
            Schema::uniform(2).unwrap(),
            [rec(10, "a", &mk(0.5)), rec(11, "b", &mk(0.9)), rec(12, "a", &mk(0.1))],
        )
        .unwrap()
    }

    #[test]
    fn top_two_of_three() {
        let hits = retrieve_modality(
            &three(),
            &query(&[1.0, 0.0]),
            QueryModality::Scene,
            2,
            SimilarityMetric::Cosine,
            RetrievalMode::SpeakerAgnostic,
        )
        .unwrap();
        let ids: Vec<u64> = hits.iter().map(|h| h.record_id).collect();
        assert_eq!(ids, vec![11, 10]);
        assert!((hits[0].score - 0.9).abs() < EPS && (hits[1].score - 0.5).abs() < EPS);
    }

    #[test]
    fn ties_break_by_id() {
        let lib = FootageLibrary::from_records(
            Schema::uniform(2).unwrap(),
            [rec(7, "a", &[1.0, 1.0]), rec(3, "a", &[2.0, 2.0]), rec(5, "a", &[0.0, 1.0])],
        )
        .unwrap();
        let hits = retrieve_modality(
            &lib,
            &query(&[1.0, 1.0]),
            QueryModality::Scene,
            3,
            SimilarityMetric::Cosine,
            RetrievalMode::SpeakerAgnostic,
        )
        .unwrap();
        assert_eq!(hits.iter().map(|h| h.record_id).collect::<Vec<_>>(), vec![3, 7, 5]);
    }

    #[test]
    fn saturation_exclusion_and_speaker_filter() {
        let lib = three();
        let mut q = query(&[1.0, 0.0]);
        let all = retrieve_modality(
            &lib,
            &q,
            QueryModality::Scene,
            10,
            SimilarityMetric::Cosine,
            RetrievalMode::SpeakerAgnostic,
        )
        .unwrap();
        assert_eq!(all.len(), 3);
        q.exclude_ids.insert(11);
        let ex = retrieve_all(&lib, &q, &RetrievalConfig::default()).unwrap();
        assert!(ex.iter().all(|m| m.hits.iter().all(|h| h.record_id != 11)));
        let sp = retrieve_modality(
            &lib,
            &q,
            QueryModality::Scene,
            3,
            SimilarityMetric::Cosine,
            RetrievalMode::SpeakerSpecific,
        )
        .unwrap();
        assert_eq!(sp.iter().map(|h| h.record_id).collect::<Vec<_>>(), vec![10, 12]);
        q.speaker_id = None;
        assert!(matches!(
            retrieve_modality(
                &lib,
                &q,
                QueryModality::Scene,
                3,
                SimilarityMetric::Cosine,
                RetrievalMode::SpeakerSpecific
            ),
            Err(Error::Argument(_))
        ));
        q.speaker_id = Some("nobody".into());
        assert!(retrieve_modality(
            &lib,
            &q,
            QueryModality::Scene,
            3,
            SimilarityMetric::Cosine,
            RetrievalMode::SpeakerSpecific
        )
        .unwrap()
        .is_empty());
    }

    #[test]
    fn zero_k_rejected() {
        assert!(retrieve_modality(
            &three(),
            &query(&[1.0, 0.0]),
            QueryModality::Scene,
            0,
            SimilarityMetric::Cosine,
            RetrievalMode::SpeakerAgnostic
        )
        .is_err());
    }

    #[test]
    fn query_dims_checked() {
        let q = query(&[1.0, 0.0, 0.0]);
        assert!(matches!(
            retrieve_modality(
                &three(),
                &q,
                QueryModality::Scene,
                1,
                SimilarityMetric::Cosine,
                RetrievalMode::SpeakerAgnostic
            ),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn matched_audio_follows_ranking() {
        let lib = three();
        let r = retrieve_all(&lib, &query(&[1.0, 0.0]), &RetrievalConfig { k: 2, ..Default::default() }).unwrap();
        for m in r.iter() {
            assert_eq!(m.hits.len(), m.matched_audio.len());
            for (h, a) in m.hits.iter().zip(&m.matched_audio) {
                assert_eq!(a, lib.get(h.record_id).unwrap().audio.values());
            }
        }
        assert_eq!(r.text.indirect[0].len(), 4);
    }
}
