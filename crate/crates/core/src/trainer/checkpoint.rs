//! Binary checkpoint format (little-endian):
//!
//! ```text
//! magic "NVFG" | version u32 | metadata length u64 | metadata (UTF-8 JSON)
//! then per parameter: name length u32 | name | rank u32 | dims u64 * rank | f64 * prod(dims)
//! ```
//!
//! Parameter names are prefixed `backbone.`, `known_head.` or
//! `reference_head.`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::TrainingConfig;
use super::model::DualBranchModel;
use super::step::EpochMetrics;
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::nn::{Network, NetworkSpec, ParamSet};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"NVFG";
pub const CHECKPOINT_VERSION: u32 = 1;

const BACKBONE: &str = "backbone.";
const KNOWN_HEAD: &str = "known_head.";
const REFERENCE_HEAD: &str = "reference_head.";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: DualBranchModel,
    pub config: Option<TrainingConfig>,
    pub epoch: usize,
    pub metrics: Option<EpochMetrics>,
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    backbone: NetworkSpec,
    known_head: NetworkSpec,
    reference_head: Option<NetworkSpec>,
    known_classes: usize,
    config: Option<TrainingConfig>,
    epoch: usize,
    metrics: Option<EpochMetrics>,
}

/// Serialises to memory.
pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let m = &ckpt.model;
    let meta = Metadata {
        backbone: m.backbone.spec.clone(),
        known_head: m.known_head.spec.clone(),
        reference_head: m.reference_head.as_ref().map(|h| h.spec.clone()),
        known_classes: m.known_classes,
        config: ckpt.config.clone(),
        epoch: ckpt.epoch,
        metrics: ckpt.metrics,
    };
    let json = serde_json::to_vec(&meta)?;

    let mut all = ParamSet::new();
    m.backbone.params.export_prefixed(BACKBONE, &mut all);
    m.known_head.params.export_prefixed(KNOWN_HEAD, &mut all);
    if let Some(h) = &m.reference_head {
        h.params.export_prefixed(REFERENCE_HEAD, &mut all);
    }

    let mut out = Vec::with_capacity(16 + json.len() + 8 * all.scalar_count() + 64 * all.len());
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (name, t) in all.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Writes to a sibling temporary file and renames it into place.
pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    write_atomic(path, &encode_checkpoint(ckpt)?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Corruption(format!("checkpoint truncated in {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 4 || bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let mut r = Reader { bytes, pos: 4 };
    let version = r.u32("header")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "checkpoint version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let meta_len =
        usize::try_from(r.u64("header")?).map_err(|_| Error::Corruption("metadata length overflows".into()))?;
    let meta: Metadata = serde_json::from_slice(r.take(meta_len, "metadata")?)
        .map_err(|e| Error::Corruption(format!("metadata: {e}")))?;

    let mut all = ParamSet::new();
    while !r.done() {
        let name_len = r.u32("record name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "record name")?)
            .map_err(|_| Error::Corruption("parameter name is not UTF-8".into()))?
            .to_owned();
        let rank = r.u32("record rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64("record dims")? as usize);
        }
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|c| c.checked_mul(8))
            .ok_or_else(|| Error::Corruption(format!("`{name}`: dimensions overflow")))?;
        let data = r
            .take(count, "record data")?
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        all.insert(name, Tensor::new(shape, data)?);
    }

    let rebuild = |spec: NetworkSpec, prefix: &str| -> Result<Network> {
        let params = ParamSet::import_prefixed(&all, prefix);
        Network::new(spec, params).map_err(|e| Error::Corruption(format!("{prefix}: {e}")))
    };
    let model = DualBranchModel {
        backbone: rebuild(meta.backbone, BACKBONE)?,
        known_head: rebuild(meta.known_head, KNOWN_HEAD)?,
        reference_head: meta.reference_head.map(|s| rebuild(s, REFERENCE_HEAD)).transpose()?,
        known_classes: meta.known_classes,
    };
    let expected = model.backbone.params.len()
        + model.known_head.params.len()
        + model.reference_head.as_ref().map_or(0, |h| h.params.len());
    if expected != all.len() {
        return Err(Error::Corruption(format!(
            "checkpoint holds {} tensors, model needs {expected}",
            all.len()
        )));
    }
    model.validate().map_err(|e| Error::Corruption(format!("model: {e}")))?;
    Ok(Checkpoint {
        model,
        config: meta.config,
        epoch: meta.epoch,
        metrics: meta.metrics,
    })
}
