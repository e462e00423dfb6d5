//! Named-tensor checkpoint container.
//!
//! ```text
//! "SGM1"
//! version        u32
//! tensor_count   u32
//! repeated tensor_count times:
//!     name_len   u16, name (UTF-8)
//!     rank       u8
//!     dims       rank × u32
//!     data       product(dims) × f64
//! config_len     u32, config (UTF-8 JSON)
//! ```
//!
//! Every integer and float is little-endian.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bundle::check_magic;
use crate::encoder::BaselineVariant;
use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SGM1";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const CHECKPOINT_FILE: &str = "model.sgm";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Signal,
    Fcn,
    Cnn,
}

impl ModelKind {
    pub fn baseline_variant(self) -> Option<BaselineVariant> {
        match self {
            ModelKind::Signal => None,
            ModelKind::Fcn => Some(BaselineVariant::Fcn),
            ModelKind::Cnn => Some(BaselineVariant::Cnn),
        }
    }
}

impl From<BaselineVariant> for ModelKind {
    fn from(v: BaselineVariant) -> Self {
        match v {
            BaselineVariant::Fcn => ModelKind::Fcn,
            BaselineVariant::Cnn => ModelKind::Cnn,
        }
    }
}

/// Hyperparameters stored alongside the tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Embedding width `d₀` the model consumes.
    pub input_dim: usize,
    /// Seen-class count `N`.
    pub classes: usize,
    pub latent_dim: usize,
    pub heads: usize,
    pub alpha: f64,
    pub tau: f64,
    pub k: usize,
    pub eps: f64,
    /// Bundle label id for each internal class index.
    pub seen_class_ids: Vec<i32>,
    pub class_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<(String, Tensor)>,
    pub config: ModelConfig,
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    fn validate(&self) -> Result<()> {
        for (i, (name, _)) in self.tensors.iter().enumerate() {
            if self.tensors[..i].iter().any(|(n, _)| n == name) {
                return Err(Error::DuplicateTensor(name.clone()));
            }
        }
        if let Some(protos) = self.tensor("gnn.prototypes") {
            if protos.rows() != self.config.classes {
                return Err(Error::Inconsistent(format!(
                    "config declares {} classes but gnn.prototypes has {} rows",
                    self.config.classes,
                    protos.rows()
                )));
            }
        }
        Ok(())
    }
}

pub fn encode_checkpoint(cp: &Checkpoint) -> Result<Vec<u8>> {
    cp.validate()?;
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&u32_field(cp.tensors.len(), "tensor count")?.to_le_bytes());
    for (name, t) in &cp.tensors {
        let name_len = u16::try_from(name.len())
            .map_err(|_| Error::InvalidInput(format!("tensor name {name:?} too long")))?;
        let rank = u8::try_from(t.rank())
            .map_err(|_| Error::InvalidInput(format!("tensor {name:?} rank too large")))?;
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(rank);
        for &d in t.dims() {
            out.extend_from_slice(&u32_field(d, "tensor dim")?.to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let config = serde_json::to_vec(&cp.config)?;
    out.extend_from_slice(&u32_field(config.len(), "config length")?.to_le_bytes());
    out.extend_from_slice(&config);
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8], origin: &Path) -> Result<Checkpoint> {
    check_magic(origin, bytes, CHECKPOINT_MAGIC)?;
    let mut r = Reader {
        bytes,
        pos: 4,
        origin,
    };
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: CHECKPOINT_VERSION,
        });
    }
    let count = r.u32()? as usize;
    let mut tensors: Vec<(String, Tensor)> = Vec::new();
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Inconsistent("tensor name is not UTF-8".into()))?
            .to_string();
        if tensors.iter().any(|(n, _)| *n == name) {
            return Err(Error::DuplicateTensor(name));
        }
        let rank = r.take(1)?[0] as usize;
        let dims = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Inconsistent(format!("tensor {name:?} dims overflow")))?;
        let byte_len = n
            .checked_mul(8)
            .ok_or_else(|| Error::Inconsistent(format!("tensor {name:?} dims overflow")))?;
        let data = r
            .take(byte_len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        tensors.push((name, Tensor::new(dims, data)?));
    }
    let config_len = r.u32()? as usize;
    let config: ModelConfig = serde_json::from_slice(r.take(config_len)?)?;
    if r.pos != bytes.len() {
        return Err(Error::Truncated {
            file: origin.to_path_buf(),
            expected: r.pos as u64,
            actual: bytes.len() as u64,
        });
    }
    let cp = Checkpoint { tensors, config };
    cp.validate()?;
    Ok(cp)
}

pub fn save_checkpoint(cp: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_checkpoint(cp)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}

fn u32_field(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidInput(format!("{what} {v} overflows 32 bits")))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Truncated {
                file: self.origin.to_path_buf(),
                expected: (self.pos as u64).saturating_add(n as u64),
                actual: self.bytes.len() as u64,
            }),
        }
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}
