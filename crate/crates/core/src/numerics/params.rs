use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::array::DArray;
use super::tape::BnObservation;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"HMRA";
pub const CHECKPOINT_VERSION: u32 = 1;

const RUNNING_MEAN: &str = ".running_mean";
const RUNNING_VAR: &str = ".running_var";

/// Named arrays in deterministic (sorted) key order.
///
/// Keys ending in `.running_mean` / `.running_var` are batch-norm buffers:
/// checkpointed like any other entry but never optimized.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: BTreeMap<String, DArray>,
}

pub fn is_buffer_key(key: &str) -> bool {
    key.ends_with(RUNNING_MEAN) || key.ends_with(RUNNING_VAR)
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn insert(&mut self, key: impl Into<String>, value: DArray) {
        self.entries.insert(key.into(), value);
    }

    pub fn get(&self, key: &str) -> Option<&DArray> {
        self.entries.get(key)
    }

    pub fn get_mut(&mut self, key: &str) -> Option<&mut DArray> {
        self.entries.get_mut(key)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &DArray)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn trainable(&self) -> impl Iterator<Item = (&str, &DArray)> {
        self.iter().filter(|(k, _)| !is_buffer_key(k))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn num_trainable_values(&self) -> usize {
        self.trainable().map(|(_, v)| v.len()).sum()
    }

    /// Exponential moving update of batch-norm buffers:
    /// `running = momentum * running + (1 - momentum) * observed`.
    pub fn apply_bn_observations(&mut self, observations: &[BnObservation], momentum: f64) {
        for obs in observations {
            let pairs = [
                (format!("{}{RUNNING_MEAN}", obs.prefix), &obs.mean),
                (format!("{}{RUNNING_VAR}", obs.prefix), &obs.var),
            ];
            for (key, observed) in pairs {
                if let Some(buf) = self.entries.get_mut(&key) {
                    for (r, o) in buf.values_mut().iter_mut().zip(observed.iter()) {
                        *r = momentum * *r + (1.0 - momentum) * o;
                    }
                }
            }
        }
    }

    pub fn to_records(&self) -> BTreeMap<String, DArray> {
        self.entries.clone()
    }

    pub fn from_records(records: BTreeMap<String, DArray>) -> Self {
        ParamStore { entries: records }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_checkpoint(path, &self.entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(ParamStore {
            entries: read_checkpoint(path)?,
        })
    }
}

/// Serializes records as: magic, version u32, then per record
/// key length u32, key bytes, rank u32, dims u32 x rank, f64 values (all little-endian).
pub fn encode_checkpoint(records: &BTreeMap<String, DArray>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for (key, arr) in records {
        out.extend_from_slice(&(key.len() as u32).to_le_bytes());
        out.extend_from_slice(key.as_bytes());
        out.extend_from_slice(&(arr.shape().len() as u32).to_le_bytes());
        for &d in arr.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in arr.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::MalformedData("truncated checkpoint".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<BTreeMap<String, DArray>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::MalformedData("bad checkpoint magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::MalformedData(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let mut records = BTreeMap::new();
    while r.pos < bytes.len() {
        let klen = r.u32()? as usize;
        let key = String::from_utf8(r.take(klen)?.to_vec())
            .map_err(|_| Error::MalformedData("checkpoint key is not utf-8".into()))?;
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let count: usize = shape.iter().product();
        let raw = r.take(count * 8)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        records.insert(key, DArray::new(shape, values)?);
    }
    Ok(records)
}

pub fn write_checkpoint(path: impl AsRef<Path>, records: &BTreeMap<String, DArray>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(records)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<BTreeMap<String, DArray>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let mut recs = BTreeMap::new();
        recs.insert("w".to_string(), DArray::new(vec![1, 2], vec![1.5, -2.0]).unwrap());
        let bytes = encode_checkpoint(&recs);
        assert_eq!(&bytes[..4], b"HMRA");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        assert_eq!(bytes[12], b'w');
        assert_eq!(u32::from_le_bytes(bytes[13..17].try_into().unwrap()), 2);
        assert_eq!(bytes.len(), 4 + 4 + 4 + 1 + 4 + 8 + 16);
    }

    #[test]
    fn bad_magic_rejected() {
        assert!(matches!(
            decode_checkpoint(b"NOPE\x01\0\0\0"),
            Err(Error::MalformedData(_))
        ));
    }

    #[test]
    fn buffers_are_not_trainable() {
        let mut s = ParamStore::new();
        s.insert("a.bn.running_mean", DArray::zeros(&[3]));
        s.insert("a.bn.gamma", DArray::zeros(&[3]));
        let keys: Vec<_> = s.trainable().map(|(k, _)| k).collect();
        assert_eq!(keys, vec!["a.bn.gamma"]);
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            entries in proptest::collection::btree_map(
                "[a-z.]{1,12}",
                proptest::collection::vec(proptest::num::f64::ANY, 0..20),
                0..6,
            )
        ) {
            let recs: BTreeMap<String, DArray> = entries
                .into_iter()
                .map(|(k, v)| { let n = v.len(); (k, DArray::new(vec![n], v).unwrap()) })
                .collect();
            let decoded = decode_checkpoint(&encode_checkpoint(&recs)).unwrap();
            prop_assert_eq!(decoded.len(), recs.len());
            for (k, v) in &recs {
                let d = &decoded[k];
                prop_assert_eq!(d.shape(), v.shape());
                for (a, b) in d.values().iter().zip(v.values()) {
                    prop_assert_eq!(a.to_bits(), b.to_bits());
                }
            }
        }
    }
}
