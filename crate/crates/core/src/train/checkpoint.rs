//! Checkpoint files.
//!
//! Little-endian layout:
//! ```text
//! "SEDC" | version u32 = 1 | header length u64 | JSON header
//! tensor payloads, f64, in header directory order
//! CRC32 (IEEE) of every preceding byte, u32
//! ```
//! The JSON header carries both configs, the epoch, the epoch log and a
//! tensor directory (`name`, `shape`, byte `offset` into the payload).
//! Tensor names are prefixed with their group: `params/`, `adam_m/`,
//! `adam_v/` or `best/`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EpochLog, OptimizerState, TrainConfig};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ParamStore};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"SEDC";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    /// Completed epochs.
    pub epoch: usize,
    pub params: ParamStore,
    pub optimizer: OptimizerState,
    pub history: Vec<EpochLog>,
    pub best_epoch: Option<usize>,
    pub best_params: Option<ParamStore>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DirEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    model_config: ModelConfig,
    train_config: TrainConfig,
    epoch: usize,
    optimizer_step: u64,
    history: Vec<EpochLog>,
    best_epoch: Option<usize>,
    tensors: Vec<DirEntry>,
}

const GROUPS: [&str; 4] = ["params", "adam_m", "adam_v", "best"];

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let mut groups: Vec<(&str, &ParamStore)> = vec![
        ("params", &ckpt.params),
        ("adam_m", &ckpt.optimizer.m),
        ("adam_v", &ckpt.optimizer.v),
    ];
    if let Some(best) = &ckpt.best_params {
        groups.push(("best", best));
    }
    let mut tensors = Vec::new();
    let mut payload = Vec::new();
    for (group, store) in groups {
        for (name, t) in store {
            tensors.push(DirEntry {
                name: format!("{group}/{name}"),
                shape: t.shape().to_vec(),
                offset: payload.len() as u64,
            });
            for v in t.data() {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let header = Header {
        model_config: ckpt.model_config.clone(),
        train_config: ckpt.train_config.clone(),
        epoch: ckpt.epoch,
        optimizer_step: ckpt.optimizer.step,
        history: ckpt.history.clone(),
        best_epoch: ckpt.best_epoch,
        tensors,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + json.len() + payload.len() + 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    let fail = |d: String| Error::format(path, d);
    if bytes.len() < 20 {
        return Err(fail(format!("truncated: {} bytes", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(fail("not a checkpoint (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(fail(format!("unsupported checkpoint version {version}")));
    }
    let body = &bytes[..bytes.len() - 4];
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(fail("checksum mismatch".into()));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let header_end = usize::try_from(header_len)
        .ok()
        .and_then(|n| n.checked_add(16))
        .filter(|&e| e <= body.len())
        .ok_or_else(|| fail(format!("header length {header_len} exceeds file")))?;
    let header: Header =
        serde_json::from_slice(&body[16..header_end]).map_err(|e| fail(format!("header: {e}")))?;
    let payload = &body[header_end..];

    let mut stores: [ParamStore; 4] = Default::default();
    let mut consumed = 0usize;
    for entry in &header.tensors {
        let (group, name) = entry
            .name
            .split_once('/')
            .ok_or_else(|| fail(format!("tensor {:?} lacks a group prefix", entry.name)))?;
        let slot = GROUPS
            .iter()
            .position(|g| *g == group)
            .ok_or_else(|| fail(format!("unknown tensor group {group}")))?;
        let count: usize = entry.shape.iter().product();
        let start = entry.offset as usize;
        let end = start + count * 8;
        if start != consumed || end > payload.len() {
            return Err(fail(format!(
                "tensor {} has inconsistent offset",
                entry.name
            )));
        }
        let data = payload[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        stores[slot].insert(name.to_string(), Tensor::new(entry.shape.clone(), data)?);
        consumed = end;
    }
    if consumed != payload.len() {
        return Err(fail(format!(
            "{} unreferenced payload bytes",
            payload.len() - consumed
        )));
    }
    let [params, m, v, best] = stores;
    Ok(Checkpoint {
        model_config: header.model_config,
        train_config: header.train_config,
        epoch: header.epoch,
        params,
        optimizer: OptimizerState {
            step: header.optimizer_step,
            m,
            v,
        },
        history: header.history,
        best_epoch: header.best_epoch,
        best_params: if best.is_empty() { None } else { Some(best) },
    })
}

/// Written to a sibling temporary file and renamed into place, so an
/// interrupted save never leaves a torn checkpoint behind.
pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let bytes = encode_checkpoint(ckpt)?;
    let tmp = path.with_extension("sedc.tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Sedmamba;

    #[test]
    fn round_trip_is_bit_exact() {
        let cfg = ModelConfig::tiny(32, 8, 2);
        let model = Sedmamba::new(cfg.clone(), 3).unwrap();
        let mut opt = OptimizerState::new(model.params());
        opt.step = 7;
        opt.m
            .values_mut()
            .for_each(|t| t.data_mut().iter_mut().for_each(|x| *x = 1.0 / 3.0));
        let ckpt = Checkpoint {
            model_config: cfg,
            train_config: TrainConfig {
                lr: 3e-4,
                ..Default::default()
            },
            epoch: 2,
            params: model.params().clone(),
            optimizer: opt,
            history: vec![EpochLog {
                epoch: 1,
                train_loss: 0.61,
                val_auc: Some(0.7),
                val_ap: None,
                seconds: 0.1,
            }],
            best_epoch: Some(1),
            best_params: Some(model.params().clone()),
        };
        let bytes = encode_checkpoint(&ckpt).unwrap();
        let back = decode_checkpoint(&bytes, Path::new("c.sedc")).unwrap();
        assert_eq!(back, ckpt);

        let mut bad = bytes.clone();
        let n = bad.len();
        bad[n - 10] ^= 1;
        assert!(decode_checkpoint(&bad, Path::new("c.sedc"))
            .unwrap_err()
            .to_string()
            .contains("checksum"));
    }
}
