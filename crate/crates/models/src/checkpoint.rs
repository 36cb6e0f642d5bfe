//! Checkpoint file:
//!
//! ```text
//! magic "SQCK" | header_len u64 LE | header JSON | f32 LE blob
//! ```
//!
//! The header holds the model config, every tensor's name, shape and
//! byte offset into the blob, and free-form metadata.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::params::{layout, Param, ParamStore};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"SQCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    version: u32,
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
    blob_len: usize,
    meta: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ParamStore<f32>,
    /// Game, dataset statistics, fusion map and anything else the caller
    /// needs at evaluation time.
    pub meta: serde_json::Value,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.params.check_layout(&self.config)?;
        let mut tensors = Vec::with_capacity(self.params.len());
        let mut offset = 0;
        for p in &self.params.params {
            tensors.push(TensorEntry {
                name: p.name.clone(),
                shape: p.shape.clone(),
                offset,
            });
            offset += 4 * p.data.len();
        }
        let header = Header {
            version: VERSION,
            config: self.config.clone(),
            tensors,
            blob_len: offset,
            meta: self.meta.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(12 + json.len() + offset);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for p in &self.params.params {
            for v in &p.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(bad("bad magic"));
        }
        let hlen = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
        let body = &bytes[12..];
        if body.len() < hlen {
            return Err(bad("truncated header"));
        }
        let header: Header = serde_json::from_slice(&body[..hlen])?;
        if header.version != VERSION {
            return Err(bad("unsupported version"));
        }
        let blob = &body[hlen..];
        if blob.len() != header.blob_len {
            return Err(bad("blob length mismatch"));
        }
        let decay: Vec<bool> = layout(&header.config).iter().map(|l| l.3).collect();
        if decay.len() != header.tensors.len() {
            return Err(bad("tensor count does not match config"));
        }
        let mut params = Vec::with_capacity(header.tensors.len());
        for (t, decay) in header.tensors.iter().zip(decay) {
            let len: usize = t.shape.iter().product();
            let end = t.offset + 4 * len;
            if end > blob.len() {
                return Err(bad("tensor runs past the blob"));
            }
            let data = blob[t.offset..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            params.push(Param {
                name: t.name.clone(),
                shape: t.shape.clone(),
                data,
                decay,
            });
        }
        let params = ParamStore { params };
        params.check_layout(&header.config)?;
        Ok(Self {
            config: header.config,
            params,
            meta: header.meta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Arch;
    use crate::params::init_model;

    #[test]
    fn roundtrip_is_exact() {
        for arch in [Arch::Dt, Arch::Dm] {
            let config = ModelConfig::tiny(arch, 6, 4, 30);
            let ck = Checkpoint {
                params: init_model(&config, 1).unwrap(),
                config,
                meta: serde_json::json!({"game": "S1", "max_return": 3.0}),
            };
            let bytes = ck.to_bytes().unwrap();
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            assert_eq!(back, ck);
            assert_eq!(back.to_bytes().unwrap(), bytes);
            assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 4]).is_err());
        }
    }
}
