//! Line-oriented JSON interchange for precomputed extractor output.
//!
//! One record per line:
//!
//! ```json
//! {"record_id":1,"movie_id":"m","speaker_id":"s","emotion_label":"happy",
//!  "scene":[..],"face":[..],"text_self":[..],"text_react":[..],"audio":[..]}
//! ```
//!
//! Blank lines are skipped. Floats are printed in shortest round-trip form,
//! so write → read preserves every bit of every value.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::library::FootageLibrary;
use super::record::FootageRecord;
use super::vector::{EmotionVector, Modality, Schema};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordLine {
    pub record_id: u64,
    pub movie_id: String,
    pub speaker_id: String,
    #[serde(default)]
    pub emotion_label: Option<String>,
    pub scene: Vec<f64>,
    pub face: Vec<f64>,
    pub text_self: Vec<f64>,
    pub text_react: Vec<f64>,
    pub audio: Vec<f64>,
}

impl RecordLine {
    pub fn from_record(r: &FootageRecord) -> Self {
        RecordLine {
            record_id: r.record_id,
            movie_id: r.movie_id.clone(),
            speaker_id: r.speaker_id.clone(),
            emotion_label: r.emotion_label.clone(),
            scene: r.scene.values().to_vec(),
            face: r.face.values().to_vec(),
            text_self: r.text_self.values().to_vec(),
            text_react: r.text_react.values().to_vec(),
            audio: r.audio.values().to_vec(),
        }
    }

    pub fn into_record(self) -> Result<FootageRecord> {
        FootageRecord::from_vectors(
            self.record_id,
            self.movie_id,
            self.speaker_id,
            self.emotion_label,
            EmotionVector::new(Modality::Scene, self.scene)?,
            EmotionVector::new(Modality::Face, self.face)?,
            EmotionVector::new(Modality::TextSelf, self.text_self)?,
            EmotionVector::new(Modality::TextReact, self.text_react)?,
            EmotionVector::new(Modality::Audio, self.audio)?,
        )
    }

    fn schema(&self) -> Result<Schema> {
        let d = |v: &Vec<f64>| u32::try_from(v.len()).map_err(|_| Error::Schema("vector too long".into()));
        Schema::new([d(&self.scene)?, d(&self.face)?, d(&self.text_self)?, d(&self.text_react)?, d(&self.audio)?])
    }
}

/// Parses interchange records. With `schema = None` the first record's
/// dims define the library schema.
pub fn read_records<R: BufRead>(reader: R, schema: Option<Schema>) -> Result<FootageLibrary> {
    let mut lib: Option<FootageLibrary> = schema.map(FootageLibrary::new);
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: RecordLine =
            serde_json::from_str(&line).map_err(|e| Error::Schema(format!("line {}: {e}", lineno + 1)))?;
        let lib = match &mut lib {
            Some(l) => l,
            None => lib.insert(FootageLibrary::new(parsed.schema()?)),
        };
        let rec = parsed.into_record()?;
        lib.insert(rec).map_err(|e| match e {
            Error::Schema(msg) => Error::Schema(format!("line {}: {msg}", lineno + 1)),
            other => other,
        })?;
    }
    lib.ok_or_else(|| Error::Schema("no records and no schema given".into()))
}

pub fn write_records<W: Write>(lib: &FootageLibrary, mut out: W) -> Result<()> {
    for r in lib.records() {
        serde_json::to_writer(&mut out, &RecordLine::from_record(r))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
