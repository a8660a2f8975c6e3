use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EpochRecord, Result, TrainConfig, TrainError};
use crate::network::{ModelConfig, MsnnModel};

const MAGIC: &[u8; 4] = b"MSNN";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

/// Everything in a checkpoint apart from the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub train: Option<TrainConfig>,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<NamedTensor>,
    pub meta: CheckpointMeta,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            TrainError::Checkpoint(format!(
                "truncated at byte {} (wanted {n} more of {})",
                self.pos,
                self.bytes.len()
            ))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

impl Checkpoint {
    /// Crossbar weights named `w0`, `w1`, ... as `rows x cols` tensors.
    pub fn from_model(model: &MsnnModel, train: Option<TrainConfig>, history: Vec<EpochRecord>) -> Self {
        let tensors = model
            .stages
            .iter()
            .enumerate()
            .map(|(k, s)| NamedTensor {
                name: format!("w{k}"),
                dims: vec![s.crossbar.n_out, s.crossbar.n_in],
                data: s.crossbar.weights.clone(),
            })
            .collect();
        Self {
            tensors,
            meta: CheckpointMeta {
                model: model.config.clone(),
                train,
                history,
            },
        }
    }

    pub fn to_model(&self) -> Result<MsnnModel> {
        let shapes = self.meta.model.weight_shapes();
        if shapes.len() != self.tensors.len() {
            return Err(TrainError::Checkpoint(format!(
                "{} tensors for {} crossbars",
                self.tensors.len(),
                shapes.len()
            )));
        }
        for (t, &(r, c)) in self.tensors.iter().zip(&shapes) {
            if t.dims != [r, c] {
                return Err(TrainError::Checkpoint(format!(
                    "tensor {} has dims {:?}, expected [{r}, {c}]",
                    t.name, t.dims
                )));
            }
        }
        let weights = self.tensors.iter().map(|t| t.data.clone()).collect();
        Ok(MsnnModel::from_weights(self.meta.model.clone(), weights)?)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            let name = t.name.as_bytes();
            let name_len = u16::try_from(name.len())
                .map_err(|_| TrainError::Checkpoint(format!("tensor name too long: {}", t.name)))?;
            out.extend_from_slice(&name_len.to_le_bytes());
            out.extend_from_slice(name);
            out.push(t.dims.len() as u8);
            for &d in &t.dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for x in &t.data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        let blob = serde_json::to_vec(&self.meta).map_err(|e| TrainError::Checkpoint(e.to_string()))?;
        out.extend_from_slice(&(blob.len() as u32).to_le_bytes());
        out.extend_from_slice(&blob);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4).ok() != Some(MAGIC.as_slice()) {
            return Err(TrainError::Checkpoint("bad magic, expected MSNN".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(TrainError::Checkpoint(format!("unsupported version {version}")));
        }
        let count = r.u32()?;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let len = usize::from(r.u16()?);
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| TrainError::Checkpoint("tensor name is not UTF-8".into()))?;
            let rank = r.u8()?;
            let dims = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = dims.iter().product();
            let raw = r.take(n.checked_mul(8).ok_or_else(|| TrainError::Checkpoint("tensor too large".into()))?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.push(NamedTensor { name, dims, data });
        }
        let len = r.u32()? as usize;
        let meta = serde_json::from_slice(r.take(len)?).map_err(|e| TrainError::Checkpoint(format!("metadata: {e}")))?;
        Ok(Self { tensors, meta })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|source| TrainError::Io {
                path: dir.to_path_buf(),
                source,
            })?;
        }
        std::fs::write(path, bytes).map_err(|source| TrainError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|source| TrainError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}
