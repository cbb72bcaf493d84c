//! Binary checkpoint files.
//!
//! Layout: magic `SPMFCKPT`, `u32` LE format version, `u64` LE header
//! length, UTF-8 JSON header, then the little-endian `f32` payload. The
//! header lists every tensor with its shape and element offset/length into
//! the payload.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::densenet::{DenseNet, NetworkConfig};
use super::tensor::Tensor;
use super::train::Trainer;
use crate::enhance::AheConfig;
use crate::error::{Error, Result};
use crate::preproc::{NormalizationStats, SavGolConfig};

pub const MAGIC: &[u8; 8] = b"SPMFCKPT";
pub const VERSION: u32 = 1;

/// How the training images were produced; inference must repeat it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncodingInfo {
    pub joints: usize,
    pub savgol: SavGolConfig,
    /// `None` when trained on plain (non-equalized) images.
    pub ahe: Option<AheConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub step: u64,
    /// `(parameter name, first moment, second moment)`.
    pub moments: Vec<(String, Vec<f32>, Vec<f32>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: NetworkConfig,
    /// Every network tensor, parameters and running statistics, by name.
    pub tensors: Vec<(String, Tensor<f32>)>,
    pub optimizer: Option<OptimizerState>,
    pub stats: NormalizationStats,
    pub class_names: Vec<String>,
    pub encoding: EncodingInfo,
    /// Completed training epochs.
    pub epoch: usize,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
    len: u64,
}

#[derive(Serialize, Deserialize)]
struct MomentEntry {
    name: String,
    offset: u64,
    len: u64,
}

#[derive(Serialize, Deserialize)]
struct OptimizerHeader {
    config: AdamConfig,
    step: u64,
    first: Vec<MomentEntry>,
    second: Vec<MomentEntry>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    network: NetworkConfig,
    tensors: Vec<TensorEntry>,
    optimizer: Option<OptimizerHeader>,
    stats: NormalizationStats,
    class_names: Vec<String>,
    encoding: EncodingInfo,
    epoch: usize,
    seed: u64,
}

impl Checkpoint {
    /// Captures the trainer's network and optimizer.
    pub fn from_trainer(
        trainer: &Trainer,
        stats: NormalizationStats,
        class_names: Vec<String>,
        encoding: EncodingInfo,
        seed: u64,
    ) -> Result<Self> {
        let mut ck = Self::from_network(&trainer.net, stats, class_names, encoding, seed)?;
        ck.epoch = trainer.epoch;
        let opt = &trainer.optimizer;
        if !opt.moments.is_empty() {
            let names: Vec<String> = trainer
                .net
                .named_tensors()
                .into_iter()
                .filter(|(_, t)| t.requires_grad())
                .map(|(n, _)| n)
                .collect();
            if names.len() != opt.moments.len() {
                return Err(Error::Checkpoint("optimizer state does not match the network".into()));
            }
            ck.optimizer = Some(OptimizerState {
                config: opt.config,
                step: opt.step,
                moments: names
                    .into_iter()
                    .zip(&opt.moments)
                    .map(|(n, (m, v))| (n, m.clone(), v.clone()))
                    .collect(),
            });
        }
        Ok(ck)
    }

    pub fn from_network(
        net: &DenseNet<f32>,
        stats: NormalizationStats,
        class_names: Vec<String>,
        encoding: EncodingInfo,
        seed: u64,
    ) -> Result<Self> {
        if class_names.len() != net.config().num_classes {
            return Err(Error::Checkpoint(format!(
                "{} class names for a {}-class network",
                class_names.len(),
                net.config().num_classes
            )));
        }
        Ok(Checkpoint {
            network: net.config().clone(),
            tensors: net.snapshot(),
            optimizer: None,
            stats,
            class_names,
            encoding,
            epoch: 0,
            seed,
        })
    }

    pub fn network(&self) -> Result<DenseNet<f32>> {
        let mut net = DenseNet::new(self.network.clone(), self.seed)?;
        net.load_tensors(&self.tensors)?;
        Ok(net)
    }

    /// Network and optimizer ready to continue training.
    pub fn trainer(&self) -> Result<Trainer> {
        let net = self.network()?;
        let mut trainer = Trainer::new(net, self.optimizer.as_ref().map_or_else(AdamConfig::default, |o| o.config))?;
        trainer.epoch = self.epoch;
        if let Some(o) = &self.optimizer {
            let names: Vec<(String, usize)> = trainer
                .net
                .named_tensors()
                .into_iter()
                .filter(|(_, t)| t.requires_grad())
                .map(|(n, t)| (n, t.numel()))
                .collect();
            let mut moments = Vec::with_capacity(names.len());
            for (name, len) in names {
                let (_, m, v) = o
                    .moments
                    .iter()
                    .find(|(n, _, _)| *n == name)
                    .ok_or_else(|| Error::Checkpoint(format!("no optimizer moments for {name}")))?;
                if m.len() != len || v.len() != len {
                    return Err(Error::Checkpoint(format!("optimizer moments for {name} have the wrong length")));
                }
                moments.push((m.clone(), v.clone()));
            }
            trainer.optimizer = Adam {
                config: o.config,
                step: o.step,
                moments,
            };
        }
        Ok(trainer)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut payload: Vec<f32> = Vec::new();
        let mut push = |data: &[f32]| -> (u64, u64) {
            let off = payload.len() as u64;
            payload.extend_from_slice(data);
            (off, data.len() as u64)
        };
        let mut names = std::collections::HashSet::new();
        let mut tensors = Vec::with_capacity(self.tensors.len());
        for (name, t) in &self.tensors {
            if !names.insert(name.as_str()) {
                return Err(Error::Checkpoint(format!("duplicate tensor name {name}")));
            }
            let (offset, len) = push(&t.data);
            tensors.push(TensorEntry {
                name: name.clone(),
                shape: t.shape.clone(),
                offset,
                len,
            });
        }
        let optimizer = self.optimizer.as_ref().map(|o| {
            let mut first = Vec::new();
            let mut second = Vec::new();
            for (name, m, v) in &o.moments {
                let (offset, len) = push(m);
                first.push(MomentEntry { name: name.clone(), offset, len });
                let (offset, len) = push(v);
                second.push(MomentEntry { name: name.clone(), offset, len });
            }
            OptimizerHeader {
                config: o.config,
                step: o.step,
                first,
                second,
            }
        });
        let header = Header {
            network: self.network.clone(),
            tensors,
            optimizer,
            stats: self.stats,
            class_names: self.class_names.clone(),
            encoding: self.encoding,
            epoch: self.epoch,
            seed: self.seed,
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(20 + json.len() + payload.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for v in payload {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = &bytes[20..];
        if hlen > body.len() {
            return Err(bad("truncated header"));
        }
        let header: Header = serde_json::from_slice(&body[..hlen])?;
        let raw = &body[hlen..];
        if raw.len() % 4 != 0 {
            return Err(bad("payload is not a whole number of f32 values"));
        }
        let payload: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let slice = |offset: u64, len: u64, name: &str| -> Result<Vec<f32>> {
            let (o, l) = (offset as usize, len as usize);
            payload
                .get(o..o.checked_add(l).ok_or_else(|| bad("offset overflow"))?)
                .map(|s| s.to_vec())
                .ok_or_else(|| Error::Checkpoint(format!("tensor {name} extends past the payload")))
        };
        let mut names = std::collections::HashSet::new();
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for e in &header.tensors {
            if !names.insert(e.name.clone()) {
                return Err(Error::Checkpoint(format!("duplicate tensor name {}", e.name)));
            }
            let t = Tensor::from_vec(&e.shape, slice(e.offset, e.len, &e.name)?)
                .map_err(|err| Error::Checkpoint(format!("tensor {}: {err}", e.name)))?;
            tensors.push((e.name.clone(), t));
        }
        let optimizer = match header.optimizer {
            None => None,
            Some(o) => {
                if o.first.len() != o.second.len() {
                    return Err(bad("optimizer moment lists differ in length"));
                }
                let mut moments = Vec::with_capacity(o.first.len());
                for (f, s) in o.first.iter().zip(&o.second) {
                    if f.name != s.name {
                        return Err(bad("optimizer moment names disagree"));
                    }
                    moments.push((f.name.clone(), slice(f.offset, f.len, &f.name)?, slice(s.offset, s.len, &s.name)?));
                }
                Some(OptimizerState {
                    config: o.config,
                    step: o.step,
                    moments,
                })
            }
        };
        header.network.validate()?;
        header.stats.validate()?;
        if header.class_names.len() != header.network.num_classes {
            return Err(bad("class names do not match the network head"));
        }
        Ok(Checkpoint {
            network: header.network,
            tensors,
            optimizer,
            stats: header.stats,
            class_names: header.class_names,
            encoding: header.encoding,
            epoch: header.epoch,
            seed: header.seed,
        })
    }

    /// Writes to a temporary sibling file and renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let file_name = path.file_name().and_then(|n| n.to_str()).unwrap_or("checkpoint");
        let tmp = dir.join(format!(".{file_name}.tmp{}", std::process::id()));
        {
            let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
            f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
            f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        }
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
