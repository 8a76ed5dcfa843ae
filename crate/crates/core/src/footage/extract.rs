//! Emotion extractors.
//!
//! A production suite wraps four recognizers:
//!
//! * scene: a video-language model captions the clip's emotional atmosphere,
//!   with global hue, lightness and saturation statistics folded into the
//!   instruction prompt; a text emotion recognizer maps the caption to a
//!   vector.
//! * face: the same video-language model captions facial expression changes;
//!   the text emotion recognizer maps the caption to a vector.
//! * text: the text emotion recognizer scores the script itself (`self`) and
//!   a commonsense reaction caption generated from it (`react`). Both halves
//!   are returned separately.
//! * audio: a universal speech emotion representation model.
//!
//! None of those models ship here. [`SyntheticExtractor`] stands in for them
//! with keyed pseudo-random vectors, and precomputed vectors can be ingested
//! through the interchange format instead.

use crate::error::{Error, Result};
use crate::rng::{Key, KeyedRng};

use super::vector::{EmotionVector, Modality, Schema};

/// Opaque raw material for one reference clip.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawInputs {
    pub video: Vec<u8>,
    pub script: String,
    pub audio: Vec<u8>,
}

impl RawInputs {
    pub fn new(video: impl Into<Vec<u8>>, script: impl Into<String>, audio: impl Into<Vec<u8>>) -> Self {
        RawInputs { video: video.into(), script: script.into(), audio: audio.into() }
    }
}

/// The four extraction procedures. Implementations must be deterministic.
pub trait ExtractorSuite {
    fn scene(&self, raw: &RawInputs) -> Result<EmotionVector>;
    fn face(&self, raw: &RawInputs) -> Result<EmotionVector>;
    /// Returns `(self, react)`.
    fn text(&self, raw: &RawInputs) -> Result<(EmotionVector, EmotionVector)>;
    fn audio(&self, raw: &RawInputs) -> Result<EmotionVector>;
}

/// Deterministic vector keyed by `(seed, content_key, modality)`.
///
/// Drawn from the SplitMix64 stream `KeyedRng::new(seed, [content_key,
/// modality.name()])` (see [`crate::rng`]); component `i` is `2u_i - 1` for
/// the `i`-th uniform draw, so values lie in `[-1, 1)`.
pub fn synthetic_extract(seed: u64, content_key: &str, modality: Modality, dim: usize) -> Result<EmotionVector> {
    if dim == 0 {
        return Err(Error::Schema("synthetic extraction with dim 0".into()));
    }
    let mut rng = KeyedRng::new(seed, &[Key::Str(content_key), Key::Str(modality.name())]);
    let values = (0..dim).map(|_| rng.uniform(-1.0, 1.0)).collect();
    EmotionVector::new(modality, values)
}

/// Keyed stand-in for the real recognizers.
///
/// Scene and face are keyed by the video bytes, both text halves by the
/// script, audio by the audio bytes (bytes are read as lossy UTF-8).
#[derive(Debug, Clone)]
pub struct SyntheticExtractor {
    pub seed: u64,
    pub schema: Schema,
}

impl SyntheticExtractor {
    pub fn new(seed: u64, schema: Schema) -> Self {
        SyntheticExtractor { seed, schema }
    }

    fn draw(&self, key: &str, modality: Modality) -> Result<EmotionVector> {
        synthetic_extract(self.seed, key, modality, self.schema.dim(modality))
    }
}

impl ExtractorSuite for SyntheticExtractor {
    fn scene(&self, raw: &RawInputs) -> Result<EmotionVector> {
        self.draw(&String::from_utf8_lossy(&raw.video), Modality::Scene)
    }

    fn face(&self, raw: &RawInputs) -> Result<EmotionVector> {
        self.draw(&String::from_utf8_lossy(&raw.video), Modality::Face)
    }

    fn text(&self, raw: &RawInputs) -> Result<(EmotionVector, EmotionVector)> {
        Ok((self.draw(&raw.script, Modality::TextSelf)?, self.draw(&raw.script, Modality::TextReact)?))
    }

    fn audio(&self, raw: &RawInputs) -> Result<EmotionVector> {
        self.draw(&String::from_utf8_lossy(&raw.audio), Modality::Audio)
    }
}
