//! Checkpoint container: `[u64 LE header length][JSON header][raw payload]`.
//!
//! The header maps tensor name → `{dtype, shape, byte_offset}` with offsets
//! into the payload, which holds little-endian f32 values. Entries are laid
//! out in name order, so two stores with equal contents serialize to
//! byte-identical files. Alongside each parameter `p`, its optimizer moments
//! are stored as `p.adam_m` / `p.adam_v`, and the global step count as the
//! one-element tensor `__step`.

use crate::error::{Error, Result};
use crate::nn::store::ParameterStore;
use crate::nn::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;

const STEP_KEY: &str = "__step";
const ADAM_M_SUFFIX: &str = ".adam_m";
const ADAM_V_SUFFIX: &str = ".adam_v";

#[derive(Serialize, Deserialize)]
struct EntryMeta {
    dtype: String,
    shape: Vec<usize>,
    byte_offset: u64,
}

/// Serializes named tensors into the container format, atomically
/// (write to a temp sibling, then rename).
pub fn write_entries(entries: &BTreeMap<String, Tensor<f32>>, path: &Path) -> Result<()> {
    let mut header = BTreeMap::new();
    let mut offset = 0u64;
    for (name, tensor) in entries {
        header.insert(
            name.clone(),
            EntryMeta {
                dtype: "f32".to_string(),
                shape: tensor.shape().to_vec(),
                byte_offset: offset,
            },
        );
        offset += (tensor.len() * 4) as u64;
    }
    let header_json = serde_json::to_vec(&header)?;

    let mut bytes = Vec::with_capacity(8 + header_json.len() + offset as usize);
    bytes.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&header_json);
    for tensor in entries.values() {
        for v in tensor.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }

    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Reads a container back into named tensors.
pub fn read_entries(path: &Path) -> Result<BTreeMap<String, Tensor<f32>>> {
    let bytes = fs::read(path)?;
    let corrupt = |msg: &str| Error::CorruptCheckpoint(format!("{}: {msg}", path.display()));

    if bytes.len() < 8 {
        return Err(corrupt("file shorter than the 8-byte header length"));
    }
    let header_len = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    if bytes.len() < 8 + header_len {
        return Err(corrupt("header extends past end of file"));
    }
    let header: BTreeMap<String, EntryMeta> = serde_json::from_slice(&bytes[8..8 + header_len])
        .map_err(|e| corrupt(&format!("bad JSON header ({e})")))?;

    let payload = &bytes[8 + header_len..];
    let mut entries = BTreeMap::new();
    for (name, meta) in header {
        if meta.dtype != "f32" {
            return Err(corrupt(&format!("entry {name} has unsupported dtype {}", meta.dtype)));
        }
        let count: usize = meta.shape.iter().product();
        let start = meta.byte_offset as usize;
        let end = start + count * 4;
        if end > payload.len() {
            return Err(corrupt(&format!("entry {name} extends past end of payload")));
        }
        let data: Vec<f32> = payload[start..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        entries.insert(name, Tensor::from_vec(&meta.shape, data)?);
    }
    Ok(entries)
}

/// Saves parameter values, Adam moments and the step count.
pub fn save_store(store: &ParameterStore<f32>, path: &Path) -> Result<()> {
    let mut entries = BTreeMap::new();
    for name in store.names() {
        let p = store.param(name)?;
        entries.insert(name.to_string(), p.value.clone());
        entries.insert(format!("{name}{ADAM_M_SUFFIX}"), p.adam_m.clone());
        entries.insert(format!("{name}{ADAM_V_SUFFIX}"), p.adam_v.clone());
    }
    entries.insert(
        STEP_KEY.to_string(),
        Tensor::from_vec(&[1], vec![store.step() as f32])?,
    );
    write_entries(&entries, path)
}

/// Rebuilds a store from [`save_store`] output. Parameters come back in name
/// order; optimizer moments default to zero when a file predates them.
pub fn load_store(path: &Path) -> Result<ParameterStore<f32>> {
    let mut entries = read_entries(path)?;
    let corrupt = |msg: String| Error::CorruptCheckpoint(format!("{}: {msg}", path.display()));

    let step = match entries.remove(STEP_KEY) {
        Some(t) if t.len() == 1 => t.data()[0] as u64,
        Some(_) => return Err(corrupt(format!("{STEP_KEY} is not a single element"))),
        None => 0,
    };

    let mut store = ParameterStore::new();
    let names: Vec<String> = entries
        .keys()
        .filter(|n| !n.ends_with(ADAM_M_SUFFIX) && !n.ends_with(ADAM_V_SUFFIX))
        .cloned()
        .collect();
    for name in &names {
        let value = entries.remove(name).unwrap();
        store.insert(name, value)?;
        for suffix in [ADAM_M_SUFFIX, ADAM_V_SUFFIX] {
            if let Some(t) = entries.remove(&format!("{name}{suffix}")) {
                let param = store.param_mut(name)?;
                let slot = if suffix == ADAM_M_SUFFIX {
                    &mut param.adam_m
                } else {
                    &mut param.adam_v
                };
                if t.shape() != slot.shape() {
                    return Err(corrupt(format!("{name}{suffix} shape does not match value")));
                }
                *slot = t;
            }
        }
    }
    if let Some(orphan) = entries.keys().next() {
        return Err(corrupt(format!("optimizer state {orphan} has no matching parameter")));
    }
    store.set_step(step);
    Ok(store)
}
