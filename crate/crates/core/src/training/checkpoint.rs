use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HduvaModel, ModelConfig, Variant};

use super::{EpochMetrics, TrainConfig};

const MAGIC: &[u8; 8] = b"HDUVACKP";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    variant: Variant,
    model: ModelConfig,
    train: TrainConfig,
    epoch: usize,
    history: Vec<EpochMetrics>,
    tensors: Vec<TensorEntry>,
}

/// Model weights plus the configuration and history that produced them.
///
/// On disk: 8-byte magic, `u32` version, `u64` header length, a JSON header,
/// then every tensor as little-endian `f64` in header order.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Epoch (1-based) the weights were taken after.
    pub epoch: usize,
    pub history: Vec<EpochMetrics>,
    tensors: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    /// Snapshot the model's current weights (deep copies).
    pub fn capture(model: &HduvaModel, train: &TrainConfig, epoch: usize, history: Vec<EpochMetrics>) -> Result<Self> {
        let tensors = model
            .store()
            .named_tensors()
            .into_iter()
            .map(|(k, t)| Ok((k, t.copy()?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        Ok(Self {
            model: model.config().clone(),
            train: train.clone(),
            epoch,
            history,
            tensors,
        })
    }

    pub fn variant(&self) -> Variant {
        self.model.variant
    }

    pub fn tensors(&self) -> &BTreeMap<String, Tensor> {
        &self.tensors
    }

    /// Rebuild the model and load the stored weights.
    pub fn to_model(&self) -> Result<HduvaModel> {
        let model = HduvaModel::new(self.model.clone(), self.train.seed)?;
        model.store().load(&self.tensors)?;
        Ok(model)
    }

    /// SHA-256 over tensor names and values.
    pub fn checksum(&self) -> Result<String> {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for (k, t) in &self.tensors {
            h.update(k.as_bytes());
            for v in t.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()? {
                h.update(v.to_le_bytes());
            }
        }
        Ok(hex::encode(h.finalize()))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Header {
            variant: self.model.variant,
            model: self.model.clone(),
            train: self.train.clone(),
            epoch: self.epoch,
            history: self.history.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|(k, t)| TensorEntry {
                    name: k.clone(),
                    shape: t.dims().to_vec(),
                    dtype: format!("{:?}", t.dtype()).to_lowercase(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::State(e.to_string()))?;
        let io = |e: std::io::Error| Error::State(format!("checkpoint write: {e}"));
        w.write_all(MAGIC).map_err(io)?;
        w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
        w.write_all(&(json.len() as u64).to_le_bytes()).map_err(io)?;
        w.write_all(&json).map_err(io)?;
        for t in self.tensors.values() {
            let mut buf = Vec::with_capacity(t.elem_count() * 8);
            for v in t.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()? {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf).map_err(io)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let bad = |m: &str| Error::State(format!("malformed checkpoint: {m}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| bad("truncated magic"))?;
        if &magic != MAGIC {
            return Err(bad("wrong magic"));
        }
        let mut u32b = [0u8; 4];
        r.read_exact(&mut u32b).map_err(|_| bad("truncated version"))?;
        if u32::from_le_bytes(u32b) != VERSION {
            return Err(bad("unsupported version"));
        }
        let mut u64b = [0u8; 8];
        r.read_exact(&mut u64b).map_err(|_| bad("truncated header length"))?;
        let len = u64::from_le_bytes(u64b) as usize;
        let mut json = vec![0u8; len];
        r.read_exact(&mut json).map_err(|_| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(&json).map_err(|e| bad(&e.to_string()))?;
        let dtype = if header.model.double_precision { DType::F64 } else { DType::F32 };
        let mut tensors = BTreeMap::new();
        for e in header.tensors {
            let n: usize = e.shape.iter().product();
            let mut buf = vec![0u8; n * 8];
            r.read_exact(&mut buf).map_err(|_| bad("truncated tensor data"))?;
            let vals: Vec<f64> = buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let t = Tensor::from_vec(vals, e.shape.as_slice(), &Device::Cpu)?.to_dtype(dtype)?;
            tensors.insert(e.name, t);
        }
        Ok(Self {
            model: header.model,
            train: header.train,
            epoch: header.epoch,
            history: header.history,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(f))
    }

    /// Load from disk; a missing file is reported as a missing artifact.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(f))
    }
}
