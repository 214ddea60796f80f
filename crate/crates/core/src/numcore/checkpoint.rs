//! Parameter checkpoints: a flat file of little-endian `f32` values plus a
//! JSON manifest mapping each tensor name to its shape and byte offset.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::{Scalar, Tensor};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub dtype: String,
    pub total_bytes: usize,
    pub tensors: BTreeMap<String, TensorEntry>,
}

pub fn encode<T: Scalar>(params: &ParamStore<T>) -> (Vec<u8>, Manifest) {
    let mut bytes = Vec::with_capacity(params.num_elements() * 4);
    let mut tensors = BTreeMap::new();
    for (name, t) in params.iter() {
        tensors.insert(
            name.to_string(),
            TensorEntry {
                shape: t.shape().to_vec(),
                offset: bytes.len(),
            },
        );
        for v in t.data() {
            bytes.extend_from_slice(&v.to_f32().unwrap_or(f32::NAN).to_le_bytes());
        }
    }
    let manifest = Manifest {
        dtype: "f32le".into(),
        total_bytes: bytes.len(),
        tensors,
    };
    (bytes, manifest)
}

/// Fills `params` in place from checkpoint bytes; names and shapes must match.
pub fn decode_into<T: Scalar>(params: &mut ParamStore<T>, bytes: &[u8], manifest: &Manifest) -> Result<()> {
    if manifest.total_bytes != bytes.len() {
        return Err(Error::Parse(format!(
            "checkpoint has {} bytes, manifest says {}",
            bytes.len(),
            manifest.total_bytes
        )));
    }
    let names: Vec<String> = params.iter().map(|(n, _)| n.to_string()).collect();
    if names.len() != manifest.tensors.len() {
        return Err(Error::ConfigMismatch("tensor count differs from manifest".into()));
    }
    for (name, t) in names.iter().zip(params.tensors_mut()) {
        let entry = manifest
            .tensors
            .get(name)
            .ok_or_else(|| Error::ConfigMismatch(format!("missing tensor {name}")))?;
        if entry.shape != t.shape() {
            return Err(Error::ShapeMismatch(t.shape().to_vec(), entry.shape.clone()));
        }
        let end = entry.offset + t.len() * 4;
        let chunk = bytes
            .get(entry.offset..end)
            .ok_or_else(|| Error::Parse(format!("tensor {name} out of bounds")))?;
        for (dst, b) in t.data_mut().iter_mut().zip(chunk.chunks_exact(4)) {
            *dst = T::lit(f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])));
        }
    }
    Ok(())
}

pub fn save<T: Scalar>(params: &ParamStore<T>, bin_path: &Path, manifest_path: &Path) -> Result<()> {
    let (bytes, manifest) = encode(params);
    fs::write(bin_path, bytes).map_err(|e| Error::io(bin_path, e))?;
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(manifest_path, json).map_err(|e| Error::io(manifest_path, e))?;
    Ok(())
}

pub fn load_into<T: Scalar>(params: &mut ParamStore<T>, bin_path: &Path, manifest_path: &Path) -> Result<()> {
    let bytes = fs::read(bin_path).map_err(|e| Error::io(bin_path, e))?;
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    decode_into(params, &bytes, &manifest)
}

/// Reads a checkpoint without a template store; tensors come back in
/// byte-offset order.
pub fn load_all(bin_path: &Path, manifest_path: &Path) -> Result<Vec<(String, Tensor<f32>)>> {
    let bytes = fs::read(bin_path).map_err(|e| Error::io(bin_path, e))?;
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let mut entries: Vec<_> = manifest.tensors.into_iter().collect();
    entries.sort_by_key(|(_, e)| e.offset);
    entries
        .into_iter()
        .map(|(name, e)| {
            let n: usize = e.shape.iter().product();
            let chunk = bytes
                .get(e.offset..e.offset + 4 * n)
                .ok_or_else(|| Error::Parse(format!("tensor {name} out of bounds")))?;
            let data = chunk
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            Ok((name, Tensor::new(e.shape, data)?))
        })
        .collect()
}
