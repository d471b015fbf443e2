//! Binary checkpoint format, version 1:
//!
//! ```text
//! b"GXLTCKPT" | u32 LE version | u64 LE header length | JSON header | f64 LE data
//! ```
//!
//! The header holds the model config, provenance hashes and the name and
//! shape of every tensor in data order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EncoderParams, ModelConfig};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"GXLTCKPT";
const VERSION: u32 = 1;

/// Provenance recorded alongside the weights.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub config_hash: String,
    pub vocab_hash: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    model: ModelConfig,
    meta: CheckpointMeta,
    tensors: Vec<TensorEntry>,
}

pub fn checkpoint_bytes(params: &EncoderParams, meta: &CheckpointMeta) -> Vec<u8> {
    let tensors = params.named_tensors();
    let header = Header {
        model: params.config.clone(),
        meta: meta.clone(),
        tensors: tensors
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(20 + header.len() + 8 * params.num_parameters());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for (_, t) in &tensors {
        for v in t.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save_checkpoint(path: &Path, params: &EncoderParams, meta: &CheckpointMeta) -> Result<()> {
    fs::write(path, checkpoint_bytes(params, meta)).map_err(|e| Error::io(path, e))
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Checkpoint("truncated file".into()));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

pub fn parse_checkpoint(mut bytes: &[u8]) -> Result<(EncoderParams, CheckpointMeta)> {
    if take(&mut bytes, 8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(take(&mut bytes, 4)?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let header_len = u64::from_le_bytes(take(&mut bytes, 8)?.try_into().expect("8 bytes")) as usize;
    let header: Header =
        serde_json::from_slice(take(&mut bytes, header_len)?).map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
    header.model.validate()?;
    let mut params = EncoderParams::zeros(&header.model);
    let expected = params.named_tensors_mut();
    if expected.len() != header.tensors.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} tensors, header lists {}",
            expected.len(),
            header.tensors.len()
        )));
    }
    for ((name, mut tensor), entry) in expected.into_iter().zip(&header.tensors) {
        if name != entry.name || tensor.shape() != entry.shape.as_slice() {
            return Err(Error::Checkpoint(format!(
                "tensor {} {:?} does not match config ({} {:?})",
                entry.name,
                entry.shape,
                name,
                tensor.shape()
            )));
        }
        let raw = take(&mut bytes, 8 * tensor.len())?;
        for (v, chunk) in tensor.iter_mut().zip(raw.chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
    }
    if !bytes.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len())));
    }
    Ok((params, header.meta))
}

pub fn load_checkpoint(path: &Path) -> Result<(EncoderParams, CheckpointMeta)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            n_layers: 1,
            n_heads: 2,
            d_model: 4,
            d_ff: 8,
            max_len: 8,
            vocab_size: 10,
            dropout: 0.0,
        }
    }

    #[test]
    fn round_trip() {
        let params = EncoderParams::init(&tiny(), 5).unwrap();
        let meta = CheckpointMeta {
            config_hash: "abc".into(),
            vocab_hash: "def".into(),
        };
        let bytes = checkpoint_bytes(&params, &meta);
        let (back, back_meta) = parse_checkpoint(&bytes).unwrap();
        assert_eq!(back, params);
        assert_eq!(back_meta, meta);
        assert_eq!(checkpoint_bytes(&back, &back_meta), bytes);
    }

    #[test]
    fn rejects_corruption() {
        let params = EncoderParams::init(&tiny(), 5).unwrap();
        let bytes = checkpoint_bytes(&params, &CheckpointMeta::default());
        assert!(parse_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(parse_checkpoint(&extra).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(parse_checkpoint(&bad).is_err());
        // header that lies about a shape
        let needle = b"\"shape\":[10,4]";
        let at = bytes.windows(needle.len()).position(|w| w == needle).unwrap();
        let mut lying = bytes.clone();
        lying[at..at + needle.len()].copy_from_slice(b"\"shape\":[4,10]");
        assert!(parse_checkpoint(&lying).is_err());
    }
}
