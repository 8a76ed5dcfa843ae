use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::KeyedRng;

use super::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A trainable matrix and its gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Matrix,
    pub grad: Matrix,
}

/// Owns every parameter of a model, in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::Config(format!("parameter {name:?} registered twice")));
        }
        let id = ParamId(self.params.len());
        let grad = Matrix::zeros(value.rows(), value.cols());
        self.by_name.insert(name.clone(), id);
        self.params.push(Parameter { name, value, grad });
        Ok(id)
    }

    /// Uniform(−√(1/fan_in), √(1/fan_in)) initialization.
    pub fn add_uniform(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        fan_in: usize,
        rng: &mut KeyedRng,
    ) -> Result<ParamId> {
        if fan_in == 0 {
            return Err(Error::Config("fan_in must be positive".into()));
        }
        let bound = (1.0 / fan_in as f64).sqrt();
        let m = Matrix::from_fn(rows, cols, |_, _| rng.uniform(-bound, bound));
        self.add(name, m)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].value
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn element_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().fill(0.0);
        }
    }
}

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"ADPK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Serializes parameter values.
///
/// ```text
/// "ADPK"  u32 version (= 1)  u64 count
/// per parameter: u32 len + UTF-8 name, u64 rows, u64 cols, f64 values (row-major)
/// ```
/// All integers and floats little-endian.
pub fn encode_checkpoint(store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(store.len() as u64).to_le_bytes());
    for (_, p) in store.iter() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.value.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(p.value.cols() as u64).to_le_bytes());
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn take<'a>(buf: &'a [u8], pos: &mut usize, n: usize, what: &str) -> Result<&'a [u8]> {
    let end = pos
        .checked_add(n)
        .filter(|&e| e <= buf.len())
        .ok_or_else(|| Error::Truncated(format!("checkpoint {what} at offset {pos}")))?;
    let s = &buf[*pos..end];
    *pos = end;
    Ok(s)
}

fn read_u64(buf: &[u8], pos: &mut usize, what: &str) -> Result<u64> {
    Ok(u64::from_le_bytes(take(buf, pos, 8, what)?.try_into().unwrap()))
}

fn read_u32(buf: &[u8], pos: &mut usize, what: &str) -> Result<u32> {
    Ok(u32::from_le_bytes(take(buf, pos, 4, what)?.try_into().unwrap()))
}

/// Parses a checkpoint into a fresh store (gradients zeroed).
pub fn decode_checkpoint(buf: &[u8]) -> Result<ParamStore> {
    let mut found = [0u8; 4];
    let n = buf.len().min(4);
    found[..n].copy_from_slice(&buf[..n]);
    if found != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic { expected: CHECKPOINT_MAGIC, found });
    }
    let mut pos = 4;
    let version = read_u32(buf, &mut pos, "version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch { expected: CHECKPOINT_VERSION, found: version });
    }
    let count = read_u64(buf, &mut pos, "count")?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let len = read_u32(buf, &mut pos, "name length")? as usize;
        let name = String::from_utf8(take(buf, &mut pos, len, "name")?.to_vec())
            .map_err(|e| Error::Schema(format!("checkpoint name: {e}")))?;
        let rows = read_u64(buf, &mut pos, "rows")? as usize;
        let cols = read_u64(buf, &mut pos, "cols")? as usize;
        let bytes = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::Schema(format!("parameter {name:?} shape {rows}x{cols} overflows")))?;
        let raw = take(buf, &mut pos, bytes, "values")?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        store.add(name, Matrix::from_vec(rows, cols, data)?)?;
    }
    if pos != buf.len() {
        return Err(Error::Schema(format!("{} trailing bytes in checkpoint", buf.len() - pos)));
    }
    Ok(store)
}

pub fn save_checkpoint(store: &ParamStore, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_checkpoint(store))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ParamStore> {
    decode_checkpoint(&fs::read(path)?)
}

impl ParamStore {
    /// Copies values from `other` by name; names and shapes must match exactly.
    pub fn load_values(&mut self, other: &ParamStore) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::Schema(format!("checkpoint has {} parameters, model has {}", other.len(), self.len())));
        }
        for p in &mut self.params {
            let id =
                other.find(&p.name).ok_or_else(|| Error::Schema(format!("checkpoint lacks parameter {:?}", p.name)))?;
            let src = other.value(id);
            if src.shape() != p.value.shape() {
                return Err(Error::DimMismatch(format!(
                    "parameter {:?}: checkpoint {:?}, model {:?}",
                    p.name,
                    src.shape(),
                    p.value.shape()
                )));
            }
            p.value = src.clone();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore {
        let mut rng = KeyedRng::from_seed(3);
        let mut s = ParamStore::new();
        s.add_uniform("a.w", 3, 4, 3, &mut rng).unwrap();
        s.add_uniform("a.b", 1, 4, 3, &mut rng).unwrap();
        s
    }

    #[test]
    fn uniform_bounds() {
        let mut rng = KeyedRng::from_seed(1);
        let mut s = ParamStore::new();
        let id = s.add_uniform("w", 50, 50, 16, &mut rng).unwrap();
        assert!(s.value(id).data().iter().all(|v| v.abs() <= 0.25));
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut s = store();
        assert!(s.add("a.w", Matrix::zeros(1, 1)).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let s = store();
        let back = decode_checkpoint(&encode_checkpoint(&s)).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn checkpoint_errors() {
        let b = encode_checkpoint(&store());
        let mut bad = b.clone();
        bad[3] = b'Q';
        assert!(matches!(decode_checkpoint(&bad), Err(Error::BadMagic { .. })));
        let mut bad = b.clone();
        bad[4] = 9;
        assert!(matches!(decode_checkpoint(&bad), Err(Error::VersionMismatch { .. })));
        assert!(matches!(decode_checkpoint(&b[..b.len() - 3]), Err(Error::Truncated(_))));
    }

    #[test]
    fn load_values_checks_shapes() {
        let mut s = store();
        let mut other = ParamStore::new();
        other.add("a.w", Matrix::zeros(3, 4)).unwrap();
        other.add("a.b", Matrix::zeros(1, 5)).unwrap();
        assert!(matches!(s.load_values(&other), Err(Error::DimMismatch(_))));
        let src = store();
        let mut dst = ParamStore::new();
        dst.add("a.b", Matrix::zeros(1, 4)).unwrap();
        dst.add("a.w", Matrix::zeros(3, 4)).unwrap();
        dst.load_values(&src).unwrap();
        assert_eq!(dst.value(dst.find("a.w").unwrap()), src.value(src.find("a.w").unwrap()));
    }
}
