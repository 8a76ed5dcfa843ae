use crate::error::{Error, Result};

use super::extract::{ExtractorSuite, RawInputs};
use super::vector::{EmotionVector, Modality, Schema};

/// One reference sample of the footage library.
///
/// The text emotion is kept as its two halves; the concatenation is formed
/// on demand by [`FootageRecord::text_concat`].
#[derive(Debug, Clone, PartialEq)]
pub struct FootageRecord {
    pub record_id: u64,
    pub movie_id: String,
    pub speaker_id: String,
    /// `None` and `Some("")` are treated as the same thing; constructors
    /// normalize the latter to `None`.
    pub emotion_label: Option<String>,
    pub scene: EmotionVector,
    pub face: EmotionVector,
    pub text_self: EmotionVector,
    pub text_react: EmotionVector,
    pub audio: EmotionVector,
}

impl FootageRecord {
    /// Record from vectors supplied directly (precomputed extractor output).
    #[allow(clippy::too_many_arguments)]
    pub fn from_vectors(
        record_id: u64,
        movie_id: impl Into<String>,
        speaker_id: impl Into<String>,
        emotion_label: Option<String>,
        scene: EmotionVector,
        face: EmotionVector,
        text_self: EmotionVector,
        text_react: EmotionVector,
        audio: EmotionVector,
    ) -> Result<Self> {
        let rec = FootageRecord {
            record_id,
            movie_id: movie_id.into(),
            speaker_id: speaker_id.into(),
            emotion_label: emotion_label.filter(|l| !l.is_empty()),
            scene,
            face,
            text_self,
            text_react,
            audio,
        };
        for m in Modality::ALL {
            let v = rec.vector(m);
            if v.modality() != m {
                return Err(Error::Schema(format!("{} slot holds a {} vector", m, v.modality())));
            }
        }
        Ok(rec)
    }

    pub fn vector(&self, modality: Modality) -> &EmotionVector {
        match modality {
            Modality::Scene => &self.scene,
            Modality::Face => &self.face,
            Modality::TextSelf => &self.text_self,
            Modality::TextReact => &self.text_react,
            Modality::Audio => &self.audio,
        }
    }

    pub(crate) fn vector_mut(&mut self, modality: Modality) -> &mut EmotionVector {
        match modality {
            Modality::Scene => &mut self.scene,
            Modality::Face => &mut self.face,
            Modality::TextSelf => &mut self.text_self,
            Modality::TextReact => &mut self.text_react,
            Modality::Audio => &mut self.audio,
        }
    }

    /// `text_self ‖ text_react`.
    pub fn text_concat(&self) -> Vec<f64> {
        let mut t = self.text_self.values().to_vec();
        t.extend_from_slice(self.text_react.values());
        t
    }

    pub fn check_schema(&self, schema: &Schema) -> Result<()> {
        Modality::ALL.into_iter().try_for_each(|m| schema.check(self.vector(m)))
    }
}

/// Runs all four extractors over `raw` and validates the output dims.
pub fn build_record<E: ExtractorSuite + ?Sized>(
    record_id: u64,
    movie_id: &str,
    speaker_id: &str,
    emotion_label: Option<&str>,
    raw: &RawInputs,
    extractors: &E,
    schema: &Schema,
) -> Result<FootageRecord> {
    let (text_self, text_react) = extractors.text(raw)?;
    let rec = FootageRecord::from_vectors(
        record_id,
        movie_id,
        speaker_id,
        emotion_label.map(str::to_owned),
        extractors.scene(raw)?,
        extractors.face(raw)?,
        text_self,
        text_react,
        extractors.audio(raw)?,
    )?;
    rec.check_schema(schema)?;
    Ok(rec)
}
