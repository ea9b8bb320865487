use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ModelConfig;
use super::net::{build_model, tensor_bytes, SleepNet};
use crate::data::NormStats;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SLPN";
pub const FORMAT_VERSION: u8 = 1;

const PREFIX_LEN: usize = 4 + 1 + 8;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the payload.
    offset: u64,
    /// Number of f32 values.
    len: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    norm: Option<NormStats>,
    /// Names of layers whose `frozen` flag is set.
    frozen: Vec<String>,
    tensors: Vec<TensorEntry>,
    /// SHA-256 of the payload, hex.
    digest: String,
    payload_bytes: u64,
}

pub fn model_to_bytes(model: &SleepNet<f32>) -> Result<Vec<u8>> {
    let mut payload = Vec::new();
    let mut tensors = Vec::new();
    for (name, shape, data) in model.tensors() {
        tensors.push(TensorEntry {
            name,
            shape,
            offset: payload.len() as u64,
            len: data.len() as u64,
        });
        tensor_bytes(data, &mut payload);
    }
    let header = Header {
        config: model.config.clone(),
        norm: model.norm.clone(),
        frozen: model.params().iter().filter(|p| p.frozen).map(|p| p.name.clone()).collect(),
        tensors,
        digest: hex::encode(Sha256::digest(&payload)),
        payload_bytes: payload.len() as u64,
    };
    let header = serde_json::to_vec(&header).map_err(|e| Error::Header(e.to_string()))?;
    let mut out = Vec::with_capacity(PREFIX_LEN + header.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.push(FORMAT_VERSION);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<SleepNet<f32>> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < PREFIX_LEN {
        return Err(Error::Truncated {
            expected: PREFIX_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    if bytes[4] != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: bytes[4],
            supported: FORMAT_VERSION,
        });
    }
    let header_len = u64::from_le_bytes(bytes[5..13].try_into().expect("8 bytes"));
    let header_end = (PREFIX_LEN as u64).saturating_add(header_len);
    if (bytes.len() as u64) < header_end {
        return Err(Error::Truncated {
            expected: header_end,
            found: bytes.len() as u64,
        });
    }
    let header_end = header_end as usize;
    let header: Header =
        serde_json::from_slice(&bytes[PREFIX_LEN..header_end]).map_err(|e| Error::Header(e.to_string()))?;
    let payload = &bytes[header_end..];
    let expected = header_end as u64 + header.payload_bytes;
    if (payload.len() as u64) < header.payload_bytes {
        return Err(Error::Truncated {
            expected,
            found: bytes.len() as u64,
        });
    }
    if payload.len() as u64 > header.payload_bytes {
        return Err(Error::Header(format!(
            "{} trailing bytes after the payload",
            payload.len() as u64 - header.payload_bytes
        )));
    }
    let actual = hex::encode(Sha256::digest(payload));
    if actual != header.digest {
        return Err(Error::DigestMismatch {
            expected: header.digest,
            actual,
        });
    }

    let mut model = build_model::<f32>(header.config)?;
    let expected_names: Vec<(String, Vec<usize>)> =
        model.tensors().into_iter().map(|(n, s, _)| (n, s)).collect();
    if expected_names.len() != header.tensors.len() {
        return Err(Error::Header(format!(
            "manifest lists {} tensors, config implies {}",
            header.tensors.len(),
            expected_names.len()
        )));
    }
    for (entry, (name, shape)) in header.tensors.iter().zip(expected_names) {
        if entry.name != name || entry.shape != shape {
            return Err(Error::Header(format!(
                "manifest entry {} {:?} does not match expected {name} {shape:?}",
                entry.name, entry.shape
            )));
        }
        let start = entry.offset as usize;
        let end = start + entry.len as usize * 4;
        let raw = payload
            .get(start..end)
            .ok_or_else(|| Error::Header(format!("tensor {name} lies outside the payload")))?;
        let dst = model.tensor_mut(&name).expect("name taken from the model");
        if dst.len() != entry.len as usize {
            return Err(Error::Header(format!("tensor {name} has {} values, expected {}", entry.len, dst.len())));
        }
        for (d, chunk) in dst.iter_mut().zip(raw.chunks_exact(4)) {
            *d = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        }
    }
    for p in model.params_mut() {
        p.frozen = header.frozen.contains(&p.name);
    }
    model.norm = header.norm;
    Ok(model)
}

pub fn save_model(model: &SleepNet<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_bytes(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SleepNet<f32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes)
}
