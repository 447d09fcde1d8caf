//! Gradient clipping, Adam and the plateau learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamStore;

/// Scales all gradients so that their global L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_gradients(params: &mut ParamStore, max_norm: f64) -> f64 {
    let norm = params
        .iter()
        .filter_map(|(_, t)| t.grad())
        .flatten()
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for t in params.tensors_mut() {
            if let Some(g) = t.take_grad() {
                t.set_grad(Some(g.into_iter().map(|v| v * s).collect()));
            }
        }
    }
    norm
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments. Each parameter keeps its own step count so that a
/// parameter without a gradient in some step (a skipped block) is left
/// untouched and its bias correction stays exact.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub steps: Vec<u64>,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ParamStore, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        Self {
            config,
            steps: vec![0; params.len()],
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn check(&self, params: &ParamStore) -> Result<()> {
        let ok = self.steps.len() == params.len()
            && self.m.len() == params.len()
            && self.v.len() == params.len()
            && params
                .iter()
                .enumerate()
                .all(|(i, (_, t))| self.m[i].len() == t.numel() && self.v[i].len() == t.numel());
        if ok {
            Ok(())
        } else {
            Err(Error::config("optimizer state does not match the parameters"))
        }
    }

    /// One bias-corrected update of every parameter that has a gradient;
    /// gradients are cleared afterwards.
    pub fn step(&mut self, params: &mut ParamStore, lr: f64) {
        let AdamConfig { beta1, beta2, eps } = self.config;
        for (i, t) in params.tensors_mut().enumerate() {
            let Some(g) = t.take_grad() else {
                continue;
            };
            self.steps[i] += 1;
            let k = self.steps[i] as i32;
            let c1 = 1.0 - beta1.powi(k);
            let c2 = 1.0 - beta2.powi(k);
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, (p, g)) in t.data_mut().iter_mut().zip(&g).enumerate() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g;
                v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
                let mhat = m[j] / c1;
                let vhat = v[j] / c2;
                *p -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlateauConfig {
    pub patience: usize,
    pub factor: f64,
    pub threshold: f64,
    pub min_lr: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        Self {
            patience: 5,
            factor: 0.5,
            threshold: 1e-4,
            min_lr: 1e-6,
        }
    }
}

impl PlateauConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0;
        if self.patience == 0
            || !(positive(self.factor) && self.factor < 1.0)
            || !positive(self.min_lr)
            || self.threshold < 0.0
        {
            return Err(Error::config(
                "plateau schedule needs patience >= 1, 0 < factor < 1, min_lr > 0 and threshold >= 0",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlateauState {
    /// `None` until the first validation.
    pub best: Option<f64>,
    pub bad_epochs: usize,
}

/// Records one validation loss and returns the learning rate to use next.
pub fn lr_plateau_step(state: &mut PlateauState, cfg: &PlateauConfig, lr: f64, val_loss: f64) -> f64 {
    let improved = match state.best {
        None => true,
        Some(best) => val_loss < best - cfg.threshold,
    };
    if improved {
        state.best = Some(val_loss);
        state.bad_epochs = 0;
        return lr;
    }
    state.bad_epochs += 1;
    if state.bad_epochs >= cfg.patience {
        state.bad_epochs = 0;
        (lr * cfg.factor).max(cfg.min_lr)
    } else {
        lr
    }
}
