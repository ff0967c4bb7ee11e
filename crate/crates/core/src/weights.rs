//! Named-tensor archive used for checkpoints and weight files.
//!
//! Layout: 8-byte magic, `u32` format version, `u64` header length, a JSON
//! header (free-form `meta` plus the tensor table), the tensors as
//! little-endian `f32` in table order, and a SHA-256 of everything before
//! it.

use std::path::Path;

use mpijpeg_tensor::{ParamStore, Scalar};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const ARCHIVE_MAGIC: &[u8; 8] = b"MPIJWTS\0";
pub const ARCHIVE_VERSION: u32 = 1;

const DIGEST_LEN: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    meta: serde_json::Value,
    tensors: Vec<TableEntry>,
}

#[derive(Serialize, Deserialize)]
struct TableEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TensorArchive {
    pub meta: serde_json::Value,
    pub tensors: Vec<NamedTensor>,
}

impl TensorArchive {
    pub fn new(meta: serde_json::Value) -> Self {
        TensorArchive {
            meta,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, shape: &[usize], data: Vec<f32>) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.tensors.push(NamedTensor {
            name: name.into(),
            shape: shape.to_vec(),
            data,
        });
    }

    /// Adds every parameter of a store under its own name.
    pub fn push_store<T: Scalar>(&mut self, store: &ParamStore<T>) {
        for (name, t) in store.iter() {
            self.push(
                name,
                t.shape(),
                t.data().iter().map(|v| v.as_f64() as f32).collect(),
            );
        }
    }

    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Overwrites every parameter of `store` from the tensor of the same
    /// name; missing names and shape mismatches are architecture errors.
    pub fn load_store<T: Scalar>(&self, store: &mut ParamStore<T>) -> Result<()> {
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let name = store.name(id).to_string();
            let t = self
                .get(&name)
                .ok_or_else(|| Error::Architecture(format!("missing tensor {name}")))?;
            if t.shape != store.get(id).shape() {
                return Err(Error::Architecture(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    t.shape,
                    store.get(id).shape()
                )));
            }
            store.set(
                id,
                t.data
                    .iter()
                    .map(|&v| T::from_f64_lossy(v as f64))
                    .collect(),
            );
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            meta: self.meta.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| TableEntry {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let payload: usize = self.tensors.iter().map(|t| t.data.len() * 4).sum();
        let mut out = Vec::with_capacity(20 + json.len() + payload + DIGEST_LEN);
        out.extend_from_slice(ARCHIVE_MAGIC);
        out.extend_from_slice(&ARCHIVE_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |m: &str| Error::CorruptCheckpoint(m.to_string());
        if bytes.len() < 20 + DIGEST_LEN || &bytes[..8] != ARCHIVE_MAGIC {
            return Err(corrupt("missing archive magic or truncated header"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != ARCHIVE_VERSION {
            return Err(Error::CheckpointVersion {
                found: version,
                expected: ARCHIVE_VERSION,
            });
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(corrupt("checksum mismatch (truncated or modified file)"));
        }
        let header_len = u64::from_le_bytes(body[12..20].try_into().unwrap()) as usize;
        let json = body
            .get(20..20 + header_len)
            .ok_or_else(|| corrupt("header runs past the end"))?;
        let header: Header =
            serde_json::from_slice(json).map_err(|e| corrupt(&format!("bad header: {e}")))?;
        let mut rest = &body[20 + header_len..];
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for entry in header.tensors {
            let n: usize = entry.shape.iter().product();
            if rest.len() < n * 4 {
                return Err(corrupt(&format!("tensor {} runs past the end", entry.name)));
            }
            let (chunk, tail) = rest.split_at(n * 4);
            rest = tail;
            tensors.push(NamedTensor {
                name: entry.name,
                shape: entry.shape,
                data: chunk
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                    .collect(),
            });
        }
        if !rest.is_empty() {
            return Err(corrupt("trailing bytes after the last tensor"));
        }
        Ok(TensorArchive {
            meta: header.meta,
            tensors,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
