//! Binary checkpoint: magic, a JSON header with the configuration and a
//! tensor manifest, then raw little-endian f64 payload in manifest order.
//!
//! ```text
//! "UNIOD\x01" | header length: u64 LE | header JSON | payload
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::model::{init_params, ModelParams};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 6] = b"UNIOD\x01";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
    /// Byte offset from the start of the payload.
    pub offset: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub config: TrainConfig,
    pub config_fingerprint: u64,
    pub corpus_fingerprint: u64,
    /// Sorted `(file name, byte length)` of the training corpus.
    pub corpus_files: Vec<(String, u64)>,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub params: ModelParams<T>,
    pub config: TrainConfig,
    pub corpus_fingerprint: u64,
    pub corpus_files: Vec<(String, u64)>,
}

fn fail(path: &Path, reason: impl Into<String>) -> Error {
    Error::Checkpoint {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

/// Serializes to bytes; identical inputs give identical bytes.
pub fn encode<T: Scalar>(
    params: &ModelParams<T>,
    config: &TrainConfig,
    corpus_files: &[(String, u64)],
    corpus_fingerprint: u64,
) -> Result<Vec<u8>> {
    let named = params.network.named_tensors();
    let mut tensors = Vec::with_capacity(named.len());
    let mut offset = 0u64;
    for (name, m) in &named {
        tensors.push(TensorEntry {
            name: name.clone(),
            shape: [m.rows(), m.cols()],
            offset,
        });
        offset += (m.len() * 8) as u64;
    }
    let header = CheckpointHeader {
        format_version: FORMAT_VERSION,
        config: config.clone(),
        config_fingerprint: params.config_fingerprint,
        corpus_fingerprint,
        corpus_files: corpus_files.to_vec(),
        tensors,
    };
    let header = serde_json::to_vec(&header)
        .map_err(|e| Error::InvalidArgument(format!("checkpoint header: {e}")))?;

    let mut out = Vec::with_capacity(MAGIC.len() + 8 + header.len() + offset as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for (_, m) in &named {
        for v in m.as_slice() {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    Ok(out)
}

/// Writes atomically: a temporary sibling file is renamed into place.
pub fn save_checkpoint<T: Scalar>(
    params: &ModelParams<T>,
    config: &TrainConfig,
    corpus_files: &[(String, u64)],
    corpus_fingerprint: u64,
    path: &Path,
) -> Result<()> {
    let bytes = encode(params, config, corpus_files, corpus_fingerprint)?;
    write_atomic(path, &bytes)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = PathBuf::from(path);
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "checkpoint".into());
    tmp.set_file_name(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>> {
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 6];
    f.read_exact(&mut magic)
        .map_err(|_| fail(path, "file too short for magic"))?;
    if &magic != MAGIC {
        return Err(fail(path, "bad magic"));
    }
    let mut rest = Vec::new();
    f.read_to_end(&mut rest).map_err(|e| Error::io(path, e))?;
    decode_body(path, &rest)
}

fn decode_body<T: Scalar>(path: &Path, body: &[u8]) -> Result<Checkpoint<T>> {
    if body.len() < 8 {
        return Err(fail(path, "missing header length"));
    }
    let header_len = u64::from_le_bytes(body[..8].try_into().expect("8 bytes")) as usize;
    let header_end = 8usize
        .checked_add(header_len)
        .filter(|&e| e <= body.len())
        .ok_or_else(|| fail(path, "header shorter than declared"))?;
    let header: CheckpointHeader = serde_json::from_slice(&body[8..header_end])
        .map_err(|e| fail(path, format!("malformed header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(fail(
            path,
            format!("unsupported format version {}", header.format_version),
        ));
    }
    header.config.validate()?;
    if header.config_fingerprint != header.config.architecture_fingerprint() {
        return Err(fail(path, "configuration fingerprint mismatch"));
    }

    let payload = &body[header_end..];
    let mut expected_offset = 0u64;
    for t in &header.tensors {
        if t.offset != expected_offset {
            return Err(fail(
                path,
                format!("tensor {} offset {} breaks contiguity", t.name, t.offset),
            ));
        }
        expected_offset += (t.shape[0] * t.shape[1] * 8) as u64;
    }
    if (payload.len() as u64) < expected_offset {
        return Err(fail(
            path,
            format!(
                "payload shorter than manifest ({} of {} bytes)",
                payload.len(),
                expected_offset
            ),
        ));
    }
    if payload.len() as u64 > expected_offset {
        return Err(fail(path, "payload longer than manifest"));
    }

    let mut params = init_params::<T>(&header.config, 0)?;
    {
        let slots = params.network.tensors_mut();
        if slots.len() != header.tensors.len() {
            return Err(fail(
                path,
                format!(
                    "manifest lists {} tensors, configuration needs {}",
                    header.tensors.len(),
                    slots.len()
                ),
            ));
        }
        for (slot, entry) in slots.into_iter().zip(&header.tensors) {
            if slot.shape() != (entry.shape[0], entry.shape[1]) {
                return Err(fail(
                    path,
                    format!("tensor {} has shape {:?}, expected {:?}", entry.name, entry.shape, slot.shape()),
                ));
            }
            let start = entry.offset as usize;
            let values: Vec<T> = payload[start..start + slot.len() * 8]
                .chunks_exact(8)
                .map(|c| T::of(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
                .collect();
            *slot = Mat::new(entry.shape[0], entry.shape[1], values)
                .map_err(|_| fail(path, format!("tensor {} is not finite", entry.name)))?;
        }
    }
    let names: Vec<String> = params.network.named_tensors().into_iter().map(|(n, _)| n).collect();
    if let Some((want, got)) = names
        .iter()
        .zip(&header.tensors)
        .find(|(w, g)| **w != g.name)
    {
        return Err(fail(path, format!("tensor {} where {want} was expected", got.name)));
    }
    params.config_fingerprint = header.config_fingerprint;
    Ok(Checkpoint {
        params,
        config: header.config,
        corpus_fingerprint: header.corpus_fingerprint,
        corpus_files: header.corpus_files,
    })
}
