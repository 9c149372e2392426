//! Binary checkpoint format.
//!
//! ```text
//! "LSNN" | u16 version | u32 tensor count
//! per tensor: u16 name length | name (UTF-8) | u8 dtype (0 = f32) | u8 rank
//!             | rank x u32 dims | f32 payload
//! u32 metadata length | metadata JSON
//! ```
//! All integers and floats are little-endian. Parameters are stored in
//! single precision.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Architecture, ModelParams, NnError, Tensor};

const MAGIC: &[u8; 4] = b"LSNN";
const VERSION: u16 = 1;
const DTYPE_F32: u8 = 0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    /// Hex SHA-256 of the feature config the model was trained on.
    pub config_hash: String,
    pub epoch: usize,
    pub architecture: Architecture,
    #[serde(default)]
    pub tag: String,
}

pub fn encode(params: &ModelParams, meta: &CheckpointMeta) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let tensors = params.tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in params.names().iter().zip(tensors) {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(DTYPE_F32);
        out.push(t.shape().len() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let json = serde_json::to_vec(meta).expect("metadata serializes");
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| NnError::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, NnError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, NnError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<(ModelParams, CheckpointMeta), NnError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| NnError::Checkpoint("tensor name is not UTF-8".into()))?;
        let dtype = r.u8()?;
        if dtype != DTYPE_F32 {
            return Err(NnError::Checkpoint(format!("unknown dtype {dtype} for {name}")));
        }
        let rank = r.u8()? as usize;
        let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let n: usize = dims.iter().product();
        let payload = r.take(n * 4)?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        records.push((name, Tensor::new(dims, data)?));
    }
    let meta_len = r.u32()? as usize;
    let meta: CheckpointMeta = serde_json::from_slice(r.take(meta_len)?)
        .map_err(|e| NnError::Checkpoint(format!("metadata: {e}")))?;
    if r.pos != bytes.len() {
        return Err(NnError::Checkpoint("trailing bytes after metadata".into()));
    }

    let mut params = ModelParams::zeros(&meta.architecture);
    let names = params.names();
    if names.len() != records.len() {
        return Err(NnError::Checkpoint(format!(
            "{} tensors stored, architecture needs {}",
            records.len(),
            names.len()
        )));
    }
    for ((want, slot), (name, t)) in names.iter().zip(params.tensors_mut()).zip(records) {
        if *want != name || slot.shape() != t.shape() {
            return Err(NnError::Checkpoint(format!(
                "record {name} {:?} does not match {want} {:?}",
                t.shape(),
                slot.shape()
            )));
        }
        *slot = t;
    }
    Ok((params, meta))
}

pub fn save(path: impl AsRef<Path>, params: &ModelParams, meta: &CheckpointMeta) -> Result<(), NnError> {
    fs::write(path, encode(params, meta))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<(ModelParams, CheckpointMeta), NnError> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::init_params;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn meta(arch: &Architecture) -> CheckpointMeta {
        CheckpointMeta {
            seed: 42,
            config_hash: "ab".repeat(32),
            epoch: 7,
            architecture: arch.clone(),
            tag: "semi".into(),
        }
    }

    #[test]
    fn bytes_round_trip_exactly() {
        let arch = Architecture::default();
        let p = init_params(&arch, &mut ChaCha8Rng::seed_from_u64(1));
        let bytes = encode(&p, &meta(&arch));
        let (q, m) = decode(&bytes).unwrap();
        assert_eq!(m, meta(&arch));
        assert_eq!(encode(&q, &m), bytes);
        for (a, b) in p.tensors().iter().zip(q.tensors()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!((*x as f32).to_bits(), (*y as f32).to_bits());
            }
        }
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let arch = Architecture {
            channels: vec![2],
            ..Architecture::for_input(4, 4)
        };
        let p = ModelParams::zeros(&arch);
        let bytes = encode(&p, &meta(&arch));
        assert!(decode(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode(&extra).is_err());
    }
}
