use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::rng::{Key, KeyedRng};

use super::record::FootageRecord;
use super::vector::{EmotionVector, Modality, Schema};

/// The multimodal reference footage library.
///
/// Records keep insertion order. Once built, a library is only read, so
/// `&FootageLibrary` can be shared freely across threads.
#[derive(Debug, Clone)]
pub struct FootageLibrary {
    schema: Schema,
    records: Vec<FootageRecord>,
    id_index: HashMap<u64, usize>,
}

impl FootageLibrary {
    pub fn new(schema: Schema) -> Self {
        FootageLibrary { schema, records: Vec::new(), id_index: HashMap::new() }
    }

    pub fn from_records(schema: Schema, records: impl IntoIterator<Item = FootageRecord>) -> Result<Self> {
        let mut lib = FootageLibrary::new(schema);
        for r in records {
            lib.insert(r)?;
        }
        Ok(lib)
    }

    pub fn insert(&mut self, record: FootageRecord) -> Result<()> {
        if self.id_index.contains_key(&record.record_id) {
            return Err(Error::DuplicateId(record.record_id));
        }
        record.check_schema(&self.schema)?;
        self.id_index.insert(record.record_id, self.records.len());
        self.records.push(record);
        Ok(())
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn records(&self) -> &[FootageRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, record_id: u64) -> Option<&FootageRecord> {
        self.id_index.get(&record_id).map(|&i| &self.records[i])
    }

    pub fn lookup(&self, record_id: u64) -> Result<&FootageRecord> {
        self.get(record_id).ok_or(Error::UnknownId(record_id))
    }

    /// Uniform sample without replacement of `⌈fraction·N⌉` records,
    /// returned in original order.
    ///
    /// The product is rounded up after subtracting `1e-9` so that values
    /// like `0.7 · 100 = 70.00000000000001` count as 70.
    pub fn subsample(&self, fraction: f64, seed: u64) -> Result<FootageLibrary> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::Argument(format!("fraction {fraction} outside (0, 1]")));
        }
        let n = self.records.len();
        let take = ((fraction * n as f64) - 1e-9).ceil().clamp(0.0, n as f64) as usize;
        let mut rng = KeyedRng::new(seed, &[Key::Str("subsample")]);
        let mut picked = rand::seq::index::sample(&mut rng, n, take).into_vec();
        picked.sort_unstable();
        FootageLibrary::from_records(self.schema, picked.into_iter().map(|i| self.records[i].clone()))
    }

    /// Copy with every vector of the listed modalities transformed by `f`.
    pub fn map_vectors<F>(&self, modalities: &[Modality], mut f: F) -> Result<FootageLibrary>
    where
        F: FnMut(&EmotionVector) -> Result<EmotionVector>,
    {
        let mut out = self.clone();
        for rec in &mut out.records {
            for &m in modalities {
                let v = f(rec.vector(m))?;
                out.schema.check(&v)?;
                *rec.vector_mut(m) = v;
            }
        }
        Ok(out)
    }
}

impl PartialEq for FootageLibrary {
    fn eq(&self, other: &Self) -> bool {
        self.schema == other.schema && self.records == other.records
    }
}
