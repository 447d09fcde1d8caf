//! Waveforms, mixtures, synthetic data, metrics and file formats.

pub mod manifest;
pub(crate) mod metrics;
mod synth;
pub mod wav;

pub use metrics::{si_sdr, si_sdr_improvement, si_sdr_slices, snr, SI_SDR_EPS};
pub use synth::{
    mix_sources, mix_waveforms, synth_mixture, synth_sources, synth_sparse_mixture, BandProfile, SynthConfig,
};

use crate::error::{Error, Result};

/// The toolkit works at a single rate.
pub const SAMPLE_RATE: u32 = 8000;

/// Mono time-domain signal.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::signal("waveform has no samples"));
        }
        if sample_rate != SAMPLE_RATE {
            return Err(Error::signal(format!(
                "sample rate {sample_rate} Hz is not supported (expected {SAMPLE_RATE} Hz)"
            )));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn from_samples(samples: Vec<f64>) -> Result<Self> {
        Self::new(samples, SAMPLE_RATE)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }
}

pub(crate) fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// A mixture `X = s_1 + ... + s_c + n` with its ground-truth parts.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureExample {
    pub mixture: Waveform,
    pub sources: Vec<Waveform>,
    pub noise: Option<Waveform>,
    pub overlap_ratio: Option<f64>,
}

/// Additivity tolerance for mixtures built in memory.
pub const MIXTURE_TOLERANCE: f64 = 1e-9;

impl MixtureExample {
    /// Validates shape and additivity, with `tolerance` on the largest
    /// absolute deviation between the mixture and the sum of its parts.
    pub fn new(
        mixture: Waveform,
        sources: Vec<Waveform>,
        noise: Option<Waveform>,
        overlap_ratio: Option<f64>,
        tolerance: f64,
    ) -> Result<Self> {
        if sources.len() < 2 {
            return Err(Error::signal(format!(
                "a mixture needs at least 2 sources, got {}",
                sources.len()
            )));
        }
        let t = mixture.len();
        for w in sources.iter().chain(noise.as_ref()) {
            if w.len() != t || w.sample_rate() != mixture.sample_rate() {
                return Err(Error::signal(format!(
                    "all waveforms must share length {t} and rate {}",
                    mixture.sample_rate()
                )));
            }
        }
        if let Some(r) = overlap_ratio {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::signal(format!("overlap ratio {r} outside [0, 1]")));
            }
        }
        let err = additivity_error(&mixture, &sources, noise.as_ref());
        if err > tolerance {
            return Err(Error::signal(format!(
                "mixture differs from the sum of its parts by {err:e} (tolerance {tolerance:e})"
            )));
        }
        Ok(Self {
            mixture,
            sources,
            noise,
            overlap_ratio,
        })
    }

    pub fn num_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn len(&self) -> usize {
        self.mixture.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mixture.is_empty()
    }
}

fn additivity_error(mixture: &Waveform, sources: &[Waveform], noise: Option<&Waveform>) -> f64 {
    (0..mixture.len())
        .map(|i| {
            let sum: f64 = sources.iter().chain(noise).map(|w| w.samples()[i]).sum();
            (mixture.samples()[i] - sum).abs()
        })
        .fold(0.0, f64::max)
}
