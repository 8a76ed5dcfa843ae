//! Binary library files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "MRFL"  u32 version (= 1)  u32 dims[5]  u64 record_count
//! per record:
//!   u64 record_id
//!   u32 len + UTF-8 movie_id
//!   u32 len + UTF-8 speaker_id
//!   u32 len + UTF-8 emotion_label   (empty = no label)
//!   f64 scene[dims[0]] face[dims[1]] text_self[dims[2]] text_react[dims[3]] audio[dims[4]]
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

use super::library::FootageLibrary;
use super::record::FootageRecord;
use super::vector::{EmotionVector, Modality, Schema};

pub const MAGIC: [u8; 4] = *b"MRFL";
pub const VERSION: u32 = 1;

pub fn encode_library(lib: &FootageLibrary) -> Vec<u8> {
    let schema = lib.schema();
    let per_record: usize = schema.dims().iter().map(|&d| d as usize * 8).sum::<usize>() + 20;
    let mut out = Vec::with_capacity(32 + lib.len() * per_record);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for d in schema.dims() {
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.extend_from_slice(&(lib.len() as u64).to_le_bytes());
    for rec in lib.records() {
        out.extend_from_slice(&rec.record_id.to_le_bytes());
        for s in [&rec.movie_id[..], &rec.speaker_id[..], rec.emotion_label.as_deref().unwrap_or("")] {
            out.extend_from_slice(&(s.len() as u32).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        }
        for m in Modality::ALL {
            for v in rec.vector(m).values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::Truncated(format!("{what}: need {n} bytes at offset {}, file has {}", self.pos, self.buf.len()))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.u32(what)? as usize;
        let bytes = self.take(n, what)?;
        String::from_utf8(bytes.to_vec()).map_err(|e| Error::Schema(format!("{what}: invalid UTF-8: {e}")))
    }
}

pub fn decode_library(bytes: &[u8]) -> Result<FootageLibrary> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic: [u8; 4] = match bytes.get(..4) {
        Some(m) => m.try_into().unwrap(),
        None => {
            let mut found = [0u8; 4];
            found[..bytes.len()].copy_from_slice(bytes);
            return Err(Error::BadMagic { expected: MAGIC, found });
        }
    };
    if magic != MAGIC {
        return Err(Error::BadMagic { expected: MAGIC, found: magic });
    }
    r.pos = 4;
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::VersionMismatch { expected: VERSION, found: version });
    }
    let mut dims = [0u32; 5];
    for (m, d) in Modality::ALL.iter().zip(dims.iter_mut()) {
        *d = r.u32(m.name())?;
    }
    let schema = Schema::new(dims)?;
    let count = r.u64("record count")?;
    let mut lib = FootageLibrary::new(schema);
    for i in 0..count {
        let record_id = r.u64("record id")?;
        let movie = r.string("movie id")?;
        let speaker = r.string("speaker id")?;
        let label = r.string("emotion label")?;
        let mut vecs = Vec::with_capacity(5);
        for m in Modality::ALL {
            let raw = r.take(schema.dim(m) * 8, m.name())?;
            let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            vecs.push(EmotionVector::new(m, values)?);
        }
        let mut it = vecs.into_iter();
        let mut next = || it.next().unwrap();
        let rec = FootageRecord::from_vectors(
            record_id,
            movie,
            speaker,
            Some(label),
            next(),
            next(),
            next(),
            next(),
            next(),
        )?;
        lib.insert(rec).map_err(|e| match e {
            Error::DuplicateId(id) => Error::Schema(format!("record {i}: duplicate id {id}")),
            other => other,
        })?;
    }
    if r.pos != bytes.len() {
        return Err(Error::DimMismatch(format!(
            "{} trailing bytes after {count} records; payload disagrees with the declared dims {:?}",
            bytes.len() - r.pos,
            dims
        )));
    }
    Ok(lib)
}

pub fn save_library(lib: &FootageLibrary, path: impl AsRef<Path>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_library(lib))?;
    f.sync_all()?;
    Ok(())
}

pub fn load_library(path: impl AsRef<Path>) -> Result<FootageLibrary> {
    decode_library(&fs::read(path)?)
}

/// Loads and requires the file's schema to equal `expected`.
pub fn load_library_expecting(path: impl AsRef<Path>, expected: &Schema) -> Result<FootageLibrary> {
    let lib = load_library(path)?;
    if lib.schema() != expected {
        return Err(Error::DimMismatch(format!("file dims {:?}, expected {:?}", lib.schema().dims(), expected.dims())));
    }
    Ok(lib)
}
