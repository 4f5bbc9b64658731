//! Binary checkpoints.
//!
//! Layout: the magic `MODITCKP`, a little-endian `u32` format version, a
//! little-endian `u64` header length, a JSON header (configuration,
//! vocabulary digest, tensor names and shapes, training summary), then every
//! tensor's values as little-endian `f64` in header order.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use modit_core::model::{Model, ModelParameters};
use modit_core::numerics::Tensor;
use modit_core::pipeline::ExperimentConfig;

use crate::config::StoredConfig;
use crate::FormatError;

const MAGIC: &[u8; 8] = b"MODITCKP";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ExperimentConfig,
    /// Digest of the vocabulary the model was trained with.
    pub vocab_sha256: String,
    pub params: ModelParameters,
    pub best_epoch: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: StoredConfig,
    vocab_sha256: String,
    best_epoch: usize,
    tensors: Vec<(String, Vec<usize>)>,
}

pub fn write_checkpoint(mut out: impl Write, ckpt: &Checkpoint) -> Result<(), FormatError> {
    let header = Header {
        config: StoredConfig::from(&ckpt.config),
        vocab_sha256: ckpt.vocab_sha256.clone(),
        best_epoch: ckpt.best_epoch,
        tensors: ckpt.params.iter().map(|(n, t)| (n.to_string(), t.shape().to_vec())).collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| FormatError::Schema(e.to_string()))?;
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    let mut buf = Vec::new();
    for (_, t) in ckpt.params.iter() {
        buf.clear();
        buf.reserve(t.numel() * 8);
        for x in t.data() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

pub fn checkpoint_bytes(ckpt: &Checkpoint) -> Vec<u8> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, ckpt).expect("writing to memory cannot fail");
    buf
}

pub fn read_checkpoint(mut input: impl Read) -> Result<Checkpoint, FormatError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(FormatError::Schema("not a checkpoint file".into()));
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(FormatError::Version {
            found: version.to_string(),
            expected: VERSION.to_string(),
        });
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    let mut json = vec![0u8; len];
    input.read_exact(&mut json)?;
    let header: Header =
        serde_json::from_slice(&json).map_err(|e| FormatError::Schema(format!("checkpoint header: {e}")))?;
    let config = ExperimentConfig::try_from(&header.config)?;

    let mut named = Vec::with_capacity(header.tensors.len());
    for (name, shape) in header.tensors {
        let n: usize = shape.iter().product();
        let mut raw = vec![0u8; n * 8];
        input.read_exact(&mut raw)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| FormatError::Schema(format!("tensor {name}: {e}")))?;
        named.push((name, t));
    }
    let mut rest = Vec::new();
    input.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(FormatError::Schema(format!("{} trailing bytes after the last tensor", rest.len())));
    }
    let model = Model::new(config.model.clone()).map_err(|e| FormatError::Schema(e.to_string()))?;
    let params = model.params_from_named(named).map_err(|e| FormatError::Schema(e.to_string()))?;
    Ok(Checkpoint {
        config,
        vocab_sha256: header.vocab_sha256,
        params,
        best_epoch: header.best_epoch,
    })
}
