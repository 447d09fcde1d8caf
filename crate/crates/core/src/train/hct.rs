//! Hierarchical constraint training: per-step early-break sampling and
//! depth-dependent loss weighting.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HctConfig {
    pub enabled: bool,
    pub lambda: f64,
    pub full_depth_fraction: f64,
    /// Taken from the model when training starts.
    #[serde(skip)]
    pub n_blocks: usize,
}

impl Default for HctConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            lambda: 0.95,
            full_depth_fraction: 0.5,
            n_blocks: 3,
        }
    }
}

impl HctConfig {
    pub fn with_blocks(mut self, n_blocks: usize) -> Self {
        self.n_blocks = n_blocks;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::config(format!("HCT lambda {} outside (0, 1]", self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.full_depth_fraction) {
            return Err(Error::config(format!(
                "full_depth_fraction {} outside [0, 1]",
                self.full_depth_fraction
            )));
        }
        if self.n_blocks < 1 {
            return Err(Error::config("HCT needs at least one block"));
        }
        Ok(())
    }

    /// `lambda^(B - i)`.
    pub fn weight(&self, early_break: usize) -> Result<f64> {
        self.check_index(early_break)?;
        Ok(self.lambda.powi((self.n_blocks - early_break) as i32))
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i < 1 || i > self.n_blocks {
            return Err(Error::config(format!(
                "early-break index {i} outside 1..={}",
                self.n_blocks
            )));
        }
        Ok(())
    }
}

/// Draws the early-break index for one training step: `B` with probability
/// `full_depth_fraction`, otherwise uniform over `1..B-1`. Always `B` when
/// HCT is disabled.
pub fn sample_early_break<R: Rng>(hct: &HctConfig, rng: &mut R) -> Result<usize> {
    hct.validate()?;
    let b = hct.n_blocks;
    if !hct.enabled {
        return Ok(b);
    }
    if b < 2 {
        return Err(Error::config("HCT needs at least two blocks to sample early layers"));
    }
    if rng.gen::<f64>() < hct.full_depth_fraction {
        Ok(b)
    } else {
        Ok(rng.gen_range(1..b))
    }
}

/// `lambda^(B - i) * pit_loss`; exactly `pit_loss` at full depth.
pub fn hct_loss(pit_loss: f64, early_break: usize, hct: &HctConfig) -> Result<f64> {
    Ok(hct.weight(early_break)? * pit_loss)
}
