//! On-disk embedding bundles.
//!
//! A bundle is a directory holding three files:
//!
//! | file            | layout (all integers little-endian)                                  |
//! |-----------------|----------------------------------------------------------------------|
//! | `embeddings.bin`| `"SGE1"`, `dim: u32`, `count: u32`, `count·dim` × `f32`, row-major   |
//! | `labels.bin`    | `"SGL1"`, `count: u32`, `count` × `i32` label ids (`-1` = unlabeled) |
//! | `manifest.json` | `{"version": 1, "label_names": [..], "splits": {name: [index, ..]}}` |

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EMBEDDINGS_FILE: &str = "embeddings.bin";
pub const LABELS_FILE: &str = "labels.bin";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const EMBEDDINGS_MAGIC: &[u8; 4] = b"SGE1";
pub const LABELS_MAGIC: &[u8; 4] = b"SGL1";
pub const MANIFEST_VERSION: u32 = 1;
pub const UNLABELED: i32 = -1;

pub const TRAIN: &str = "train";
pub const DEV: &str = "dev";
pub const TEST: &str = "test";

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBundle {
    pub dim: usize,
    /// `count × dim` row-major.
    pub vectors: Vec<f32>,
    pub label_ids: Vec<i32>,
    pub label_names: Vec<String>,
    pub splits: BTreeMap<String, Vec<usize>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    label_names: Vec<String>,
    splits: BTreeMap<String, Vec<u64>>,
}

impl EmbeddingBundle {
    pub fn empty(dim: usize, label_names: Vec<String>) -> Self {
        Self {
            dim,
            vectors: Vec::new(),
            label_ids: Vec::new(),
            label_names,
            splits: BTreeMap::new(),
        }
    }

    pub fn count(&self) -> usize {
        self.label_ids.len()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        self.row(i).iter().map(|&v| f64::from(v)).collect()
    }

    pub fn split(&self, name: &str) -> Result<&[usize]> {
        self.splits
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::InvalidInput(format!("bundle has no split named {name:?}")))
    }

    pub fn label_name(&self, id: i32) -> Option<&str> {
        usize::try_from(id)
            .ok()
            .and_then(|i| self.label_names.get(i))
            .map(String::as_str)
    }

    /// Checks every structural invariant.
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Inconsistent("embedding dim must be positive".into()));
        }
        if self.vectors.len() != self.count() * self.dim {
            return Err(Error::Inconsistent(format!(
                "{} vector values for {} records of dim {}",
                self.vectors.len(),
                self.count(),
                self.dim
            )));
        }
        if let Some(pos) = self.vectors.iter().position(|v| !v.is_finite()) {
            return Err(Error::Inconsistent(format!(
                "non-finite value in record {}",
                pos / self.dim
            )));
        }
        for (i, &id) in self.label_ids.iter().enumerate() {
            if id != UNLABELED && (id < 0 || id as usize >= self.label_names.len()) {
                return Err(Error::Inconsistent(format!(
                    "record {i} has label id {id} but only {} label names",
                    self.label_names.len()
                )));
            }
        }
        let mut owner: Vec<Option<&str>> = vec![None; self.count()];
        for (name, indices) in &self.splits {
            for &idx in indices {
                let slot = owner.get_mut(idx).ok_or_else(|| {
                    Error::Inconsistent(format!(
                        "split {name:?} references record {idx} but count is {}",
                        self.count()
                    ))
                })?;
                if let Some(prev) = slot {
                    return Err(Error::Inconsistent(format!(
                        "record {idx} appears in splits {prev:?} and {name:?}"
                    )));
                }
                *slot = Some(name);
            }
        }
        Ok(())
    }
}

pub fn write_bundle(bundle: &EmbeddingBundle, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    bundle.validate()?;
    let dim = to_u32(bundle.dim, "dim")?;
    let count = to_u32(bundle.count(), "count")?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut emb = Vec::with_capacity(12 + bundle.vectors.len() * 4);
    emb.extend_from_slice(EMBEDDINGS_MAGIC);
    emb.extend_from_slice(&dim.to_le_bytes());
    emb.extend_from_slice(&count.to_le_bytes());
    for v in &bundle.vectors {
        emb.extend_from_slice(&v.to_le_bytes());
    }
    write_file(&dir.join(EMBEDDINGS_FILE), &emb)?;

    let mut labels = Vec::with_capacity(8 + bundle.count() * 4);
    labels.extend_from_slice(LABELS_MAGIC);
    labels.extend_from_slice(&count.to_le_bytes());
    for id in &bundle.label_ids {
        labels.extend_from_slice(&id.to_le_bytes());
    }
    write_file(&dir.join(LABELS_FILE), &labels)?;

    let manifest = Manifest {
        version: MANIFEST_VERSION,
        label_names: bundle.label_names.clone(),
        splits: bundle
            .splits
            .iter()
            .map(|(k, v)| (k.clone(), v.iter().map(|&i| i as u64).collect()))
            .collect(),
    };
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    write_file(&dir.join(MANIFEST_FILE), &json)
}

pub fn read_bundle(dir: impl AsRef<Path>) -> Result<EmbeddingBundle> {
    let dir = dir.as_ref();

    let path = dir.join(EMBEDDINGS_FILE);
    let bytes = read_file(&path)?;
    check_magic(&path, &bytes, EMBEDDINGS_MAGIC)?;
    let header = header_u32s::<2>(&path, &bytes, 12)?;
    let (dim, count) = (header[0] as usize, header[1] as usize);
    expect_len(&path, &bytes, 12 + (count as u64) * (dim as u64) * 4)?;
    let vectors: Vec<f32> = bytes[12..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();

    let path = dir.join(LABELS_FILE);
    let bytes = read_file(&path)?;
    check_magic(&path, &bytes, LABELS_MAGIC)?;
    let label_count = header_u32s::<1>(&path, &bytes, 8)?[0] as usize;
    if label_count != count {
        return Err(Error::Inconsistent(format!(
            "{} holds {label_count} labels but {EMBEDDINGS_FILE} holds {count} records",
            path.display()
        )));
    }
    expect_len(&path, &bytes, 8 + (count as u64) * 4)?;
    let label_ids = bytes[8..]
        .chunks_exact(4)
        .map(|c| i32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();

    let path = dir.join(MANIFEST_FILE);
    let manifest: Manifest = serde_json::from_slice(&read_file(&path)?)?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::UnsupportedVersion {
            found: manifest.version,
            supported: MANIFEST_VERSION,
        });
    }
    let splits = manifest
        .splits
        .into_iter()
        .map(|(k, v)| {
            let idx = v
                .into_iter()
                .map(|i| usize::try_from(i).unwrap_or(usize::MAX))
                .collect();
            (k, idx)
        })
        .collect();

    let bundle = EmbeddingBundle {
        dim,
        vectors,
        label_ids,
        label_names: manifest.label_names,
        splits,
    };
    bundle.validate()?;
    Ok(bundle)
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidInput(format!("{what} {v} overflows a 32-bit field")))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn check_magic(path: &Path, bytes: &[u8], magic: &[u8; 4]) -> Result<()> {
    if bytes.len() < 4 || &bytes[..4] != magic {
        let found = &bytes[..bytes.len().min(4)];
        return Err(Error::BadMagic {
            file: PathBuf::from(path),
            expected: String::from_utf8_lossy(magic).into_owned(),
            found: String::from_utf8_lossy(found).into_owned(),
        });
    }
    Ok(())
}

fn header_u32s<const N: usize>(path: &Path, bytes: &[u8], header_len: usize) -> Result<[u32; N]> {
    if bytes.len() < header_len {
        return Err(Error::Truncated {
            file: path.to_path_buf(),
            expected: header_len as u64,
            actual: bytes.len() as u64,
        });
    }
    Ok(std::array::from_fn(|i| {
        let at = 4 + 4 * i;
        u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
    }))
}

fn expect_len(path: &Path, bytes: &[u8], expected: u64) -> Result<()> {
    if bytes.len() as u64 != expected {
        return Err(Error::Truncated {
            file: path.to_path_buf(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    Ok(())
}
