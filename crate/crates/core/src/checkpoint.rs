//! Checkpoint files.
//!
//! Layout: the line `SEPFORGE-CKPT-v1`, a little-endian `u64` header
//! length, a JSON header (model config, parameter names and shapes,
//! optional training state), then every array as little-endian `f64`:
//! parameters in header order, followed by the Adam first and second
//! moments when training state is present.

use std::fs;
use std::path::Path;

use sepforge_autodiff::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::separator::{Model, ModelConfig};
use crate::train::{AdamConfig, AdamState, MetricsRow, PlateauState, TrainState};

pub const MAGIC: &str = "SEPFORGE-CKPT-v1";

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct TrainHeader {
    seed: u64,
    step: u64,
    epoch: usize,
    lr: f64,
    plateau: PlateauState,
    adam: AdamConfig,
    adam_steps: Vec<u64>,
    best_val_loss: Option<f64>,
    history: Vec<MetricsRow>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    params: Vec<ParamEntry>,
    train: Option<TrainHeader>,
}

pub fn to_bytes(model: &Model, state: Option<&TrainState>) -> Vec<u8> {
    let header = Header {
        model: model.config.clone(),
        params: model
            .params
            .iter()
            .map(|(name, t)| ParamEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        train: state.map(|s| TrainHeader {
            seed: s.seed,
            step: s.step,
            epoch: s.epoch,
            lr: s.lr,
            plateau: s.plateau.clone(),
            adam: s.adam.config.clone(),
            adam_steps: s.adam.steps.clone(),
            best_val_loss: s.best_val_loss,
            history: s.history.clone(),
        }),
    };
    let json = serde_json::to_vec(&header).expect("checkpoint header serialises");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC.as_bytes());
    out.push(b'\n');
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    let mut put = |xs: &[f64]| xs.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
    model.params.iter().for_each(|(_, t)| put(t.data()));
    if let Some(s) = state {
        s.adam.m.iter().for_each(|m| put(m));
        s.adam.v.iter().for_each(|v| put(v));
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> std::result::Result<&[u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| "file is truncated".to_string())?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn floats(&mut self, n: usize) -> std::result::Result<Vec<f64>, String> {
        let raw = self.take(n.checked_mul(8).ok_or("array too large")?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect())
    }
}

fn parse(bytes: &[u8]) -> std::result::Result<(Model, Option<TrainState>), String> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r
        .take(MAGIC.len() + 1)
        .map_err(|_| "not a checkpoint file".to_string())?;
    if &magic[..MAGIC.len()] != MAGIC.as_bytes() || magic[MAGIC.len()] != b'\n' {
        return Err(format!("bad magic (expected {MAGIC})"));
    }
    let len = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
    let len = usize::try_from(len).map_err(|_| "header too large".to_string())?;
    let header: Header = serde_json::from_slice(r.take(len)?).map_err(|e| format!("bad header: {e}"))?;
    header.model.validate().map_err(|e| e.to_string())?;

    let mut params = ParamStore::new();
    for p in &header.params {
        let n = p.shape.iter().product();
        let t = Tensor::new(&p.shape, r.floats(n)?).map_err(|e| e.to_string())?;
        params.insert(p.name.clone(), t).map_err(|e| e.to_string())?;
    }
    let model = Model {
        config: header.model,
        params,
    };
    let state = match header.train {
        None => None,
        Some(t) => {
            let sizes: Vec<usize> = model.params.iter().map(|(_, p)| p.numel()).collect();
            let m = sizes
                .iter()
                .map(|&n| r.floats(n))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let v = sizes
                .iter()
                .map(|&n| r.floats(n))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let adam = AdamState {
                config: t.adam,
                steps: t.adam_steps,
                m,
                v,
            };
            adam.check(&model.params).map_err(|e| e.to_string())?;
            Some(TrainState {
                seed: t.seed,
                step: t.step,
                epoch: t.epoch,
                lr: t.lr,
                plateau: t.plateau,
                adam,
                best_val_loss: t.best_val_loss,
                history: t.history,
            })
        }
    };
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    Ok((model, state))
}

pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<(Model, Option<TrainState>)> {
    parse(bytes).map_err(|msg| Error::Checkpoint {
        path: path.to_path_buf(),
        msg,
    })
}

pub fn save(path: impl AsRef<Path>, model: &Model, state: Option<&TrainState>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(model, state)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<(Model, Option<TrainState>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes, path)
}
