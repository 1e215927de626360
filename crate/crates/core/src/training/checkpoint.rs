//! Binary checkpoint: `LMPT` magic, `u16` version, CRC32 of the payload, then
//! the payload as four length-prefixed sections (model config JSON, train
//! config JSON, registry JSON, parameter table). All integers little-endian.
//! Each parameter entry is `u32` name length, name, `u32` rank, `u64` dims,
//! then `f32` values.

use std::path::Path;

use super::config::TrainConfig;
use crate::autodiff::Tensor;
use crate::dataio::LabelRegistry;
use crate::error::{LmptError, Result};
use crate::model::{LmptModel, ModelConfig, ParamSet};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"LMPT";
pub const FORMAT_VERSION: u16 = 1;
const HEADER: usize = 4 + 2 + 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub registry: LabelRegistry,
    pub params: ParamSet<f32>,
}

fn bad(msg: impl Into<String>) -> LmptError {
    LmptError::Checkpoint(msg.into())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| bad("truncated checkpoint"))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| bad("section length overflows"))
    }

    fn section(&mut self) -> Result<&'a [u8]> {
        let n = self.len()?;
        self.take(n)
    }
}

fn push_section(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(bytes);
}

fn encode_params(params: &ParamSet<f32>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn decode_params(bytes: &[u8]) -> Result<ParamSet<f32>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let count = r.u32()?;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?).map_err(|_| bad("parameter name is not UTF-8"))?.to_string();
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.len()).collect::<Result<Vec<_>>>()?;
        let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| bad("shape overflows"))?;
        let raw = r.take(numel.checked_mul(4).ok_or_else(|| bad("shape overflows"))?)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        params.push(name, Tensor::new(shape, data).map_err(|e| bad(e.to_string()))?);
    }
    if r.pos != bytes.len() {
        return Err(bad("trailing bytes in parameter table"));
    }
    Ok(params)
}

fn json<T: serde::Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec(value).expect("configs serialize")
}

impl Checkpoint {
    /// Stores `params` at 32-bit precision.
    pub fn new<S: Scalar>(model: ModelConfig, train: TrainConfig, registry: LabelRegistry, params: &ParamSet<S>) -> Self {
        Self { model, train, registry, params: params.cast() }
    }

    fn payload(&self) -> Vec<u8> {
        let mut out = Vec::new();
        push_section(&mut out, &json(&self.model));
        push_section(&mut out, &json(&self.train));
        push_section(&mut out, self.registry.to_json_string().as_bytes());
        push_section(&mut out, &encode_params(&self.params));
        out
    }

    /// CRC32 of the payload, as stored in the header.
    pub fn checksum(&self) -> u32 {
        crc32fast::hash(&self.payload())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let payload = self.payload();
        let mut out = Vec::with_capacity(HEADER + payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
        out.extend_from_slice(&payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER {
            return Err(bad("truncated checkpoint header"));
        }
        if &bytes[..4] != MAGIC {
            return Err(bad("not a checkpoint (bad magic)"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported checkpoint version {version}")));
        }
        let stored = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes"));
        let payload = &bytes[HEADER..];
        if crc32fast::hash(payload) != stored {
            return Err(bad("checksum mismatch"));
        }
        let mut r = Reader { buf: payload, pos: 0 };
        let model: ModelConfig =
            serde_json::from_slice(r.section()?).map_err(|e| bad(format!("model config: {e}")))?;
        let train: TrainConfig =
            serde_json::from_slice(r.section()?).map_err(|e| bad(format!("train config: {e}")))?;
        let registry_text = std::str::from_utf8(r.section()?).map_err(|_| bad("registry is not UTF-8"))?;
        let registry = LabelRegistry::from_json_str(registry_text).map_err(|e| bad(format!("registry: {e}")))?;
        let params = decode_params(r.section()?)?;
        if r.pos != payload.len() {
            return Err(bad("trailing bytes after parameter table"));
        }
        Ok(Self { model, train, registry, params })
    }

    /// Rebuilds the network from the stored parameters.
    pub fn load_model<S: Scalar>(&self) -> Result<LmptModel<S>> {
        LmptModel::from_params(self.model.clone(), self.params.cast())
    }
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    std::fs::write(path, checkpoint.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&std::fs::read(path)?)
}
