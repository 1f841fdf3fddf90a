//! Binary parameter checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! "HMARL-CKPT-1\n"
//! u32 entry count
//! per entry: u32 name length, UTF-8 name, u32 rank, u64 × rank extents, f64 × Π extents values
//! ```

use std::fs;
use std::path::Path;

use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8] = b"HMARL-CKPT-1\n";

pub fn encode(store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(MAGIC.len() + 8 * store.num_values() + 64 * store.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (name, t) in store.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ParamStore> {
    if !bytes.starts_with(MAGIC) {
        return Err(Error::Checkpoint("missing HMARL-CKPT-1 header".into()));
    }
    let mut r = Reader {
        bytes,
        pos: MAGIC.len(),
    };
    let count = r.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32()? as usize;
        let shape = (0..rank)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("oversized tensor".into()))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        store.insert(name, Tensor::new(&shape, data)?)?;
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes after last entry".into()));
    }
    Ok(store)
}

pub fn save(store: &ParamStore, path: &Path) -> Result<()> {
    fs::write(path, encode(store)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<ParamStore> {
    decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Loads `path` into an existing store with the same layout.
pub fn load_into(store: &mut ParamStore, path: &Path) -> Result<()> {
    let loaded = load(path)?;
    store.copy_from(&loaded)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn rejects_bad_header_and_truncation() {
        assert!(decode(b"NOPE").is_err());
        let mut store = ParamStore::new();
        store.insert("a", Tensor::scalar(1.0)).unwrap();
        let bytes = encode(&store);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(values in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 0..12), 0..5)) {
            let mut store = ParamStore::new();
            for (i, v) in values.iter().enumerate() {
                store.insert(format!("p{i}.weight"), Tensor::new(&[v.len()], v.clone()).unwrap()).unwrap();
            }
            let back = decode(&encode(&store)).unwrap();
            prop_assert_eq!(back, store);
        }
    }
}
