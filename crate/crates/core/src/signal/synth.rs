//! Synthetic stand-ins for speech: each source is a few sinusoids inside its
//! own frequency band with slow amplitude modulation. Disjoint bands make
//! the toy task learnable by a small separator.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{rms, MixtureExample, Waveform, MIXTURE_TOLERANCE, SAMPLE_RATE};
use crate::error::{Error, Result};

const TONES_PER_SOURCE: usize = 3;
const MODULATION_DEPTH: f64 = 0.3;
const MODULATION_HZ: (f64, f64) = (0.5, 3.0);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandProfile {
    pub low_hz: f64,
    pub high_hz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub num_sources: usize,
    pub duration_seconds: f64,
    /// Per-source RMS level in dB relative to full scale, drawn uniformly.
    pub gain_db_range: [f64; 2],
    pub source_profiles: Vec<BandProfile>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_sources: 2,
            duration_seconds: 1.0,
            gain_db_range: [-33.0, -25.0],
            source_profiles: vec![
                BandProfile {
                    low_hz: 200.0,
                    high_hz: 800.0,
                },
                BandProfile {
                    low_hz: 1600.0,
                    high_hz: 3200.0,
                },
            ],
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_sources < 1 {
            return Err(Error::config("num_sources must be at least 1"));
        }
        if self.source_profiles.len() != self.num_sources {
            return Err(Error::config(format!(
                "{} source profiles given for {} sources",
                self.source_profiles.len(),
                self.num_sources
            )));
        }
        let [lo, hi] = self.gain_db_range;
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::config(format!("gain range [{lo}, {hi}] is empty")));
        }
        let nyquist = SAMPLE_RATE as f64 / 2.0;
        for p in &self.source_profiles {
            if !(p.low_hz > 0.0 && p.low_hz <= p.high_hz) {
                return Err(Error::config(format!("invalid band [{}, {}] Hz", p.low_hz, p.high_hz)));
            }
            if p.high_hz + MODULATION_HZ.1 >= nyquist {
                return Err(Error::config(format!(
                    "band [{}, {}] Hz reaches the Nyquist frequency {nyquist} Hz",
                    p.low_hz, p.high_hz
                )));
            }
        }
        if self.num_samples() == 0 {
            return Err(Error::config("duration is shorter than one sample"));
        }
        Ok(())
    }

    pub fn num_samples(&self) -> usize {
        (self.duration_seconds * SAMPLE_RATE as f64).round().max(0.0) as usize
    }
}

/// Draws one unscaled waveform per source profile.
pub fn synth_sources<R: Rng>(cfg: &SynthConfig, rng: &mut R) -> Result<Vec<Waveform>> {
    cfg.validate()?;
    let n = cfg.num_samples();
    let sr = SAMPLE_RATE as f64;
    cfg.source_profiles
        .iter()
        .map(|band| {
            let tones: Vec<(f64, f64, f64)> = (0..TONES_PER_SOURCE)
                .map(|_| {
                    let f = if band.high_hz > band.low_hz {
                        rng.gen_range(band.low_hz..band.high_hz)
                    } else {
                        band.low_hz
                    };
                    (f, rng.gen_range(0.0..TAU), rng.gen_range(0.5..1.0))
                })
                .collect();
            let fm = rng.gen_range(MODULATION_HZ.0..MODULATION_HZ.1);
            let pm = rng.gen_range(0.0..TAU);
            let samples = (0..n)
                .map(|i| {
                    let t = i as f64 / sr;
                    let carrier: f64 = tones.iter().map(|(f, p, a)| a * (TAU * f * t + p).sin()).sum();
                    carrier * (1.0 + MODULATION_DEPTH * (TAU * fm * t + pm).sin())
                })
                .collect();
            Waveform::from_samples(samples)
        })
        .collect()
}

/// Scales each source to its RMS target (dB re full scale) and sums them.
/// Works for any number of sources, including one.
pub fn mix_waveforms(sources: &[Waveform], gains_db: &[f64]) -> Result<(Waveform, Vec<Waveform>)> {
    if sources.is_empty() {
        return Err(Error::signal("no sources to mix"));
    }
    if sources.len() != gains_db.len() {
        return Err(Error::signal(format!(
            "{} gains given for {} sources",
            gains_db.len(),
            sources.len()
        )));
    }
    let t = sources[0].len();
    if sources
        .iter()
        .any(|s| s.len() != t || s.sample_rate() != sources[0].sample_rate())
    {
        return Err(Error::signal("sources differ in length or sample rate"));
    }
    let scaled: Vec<Waveform> = sources
        .iter()
        .zip(gains_db)
        .map(|(s, g)| {
            let level = rms(s.samples());
            if level == 0.0 {
                return Err(Error::signal("cannot set the level of an all-zero source"));
            }
            let k = 10f64.powf(g / 20.0) / level;
            Waveform::new(s.samples().iter().map(|v| v * k).collect(), s.sample_rate())
        })
        .collect::<Result<_>>()?;
    let mut mix = vec![0.0; t];
    for s in &scaled {
        mix.iter_mut().zip(s.samples()).for_each(|(m, v)| *m += v);
    }
    Ok((Waveform::new(mix, sources[0].sample_rate())?, scaled))
}

/// Builds a clean mixture from `sources` at the given levels.
pub fn mix_sources(sources: &[Waveform], gains_db: &[f64]) -> Result<MixtureExample> {
    let (mixture, scaled) = mix_waveforms(sources, gains_db)?;
    MixtureExample::new(mixture, scaled, None, None, MIXTURE_TOLERANCE)
}

fn draw_gains<R: Rng>(cfg: &SynthConfig, rng: &mut R) -> Vec<f64> {
    let [lo, hi] = cfg.gain_db_range;
    (0..cfg.num_sources)
        .map(|_| if hi > lo { rng.gen_range(lo..hi) } else { lo })
        .collect()
}

/// Fully overlapped mixture with random per-source levels.
pub fn synth_mixture<R: Rng>(cfg: &SynthConfig, rng: &mut R) -> Result<MixtureExample> {
    let sources = synth_sources(cfg, rng)?;
    let gains = draw_gains(cfg, rng);
    mix_sources(&sources, &gains)
}

/// Two-source mixture whose active regions overlap by `overlap_ratio`
/// (overlapped samples over the union of active samples). Inactive samples
/// are exact zeros.
pub fn synth_sparse_mixture<R: Rng>(cfg: &SynthConfig, overlap_ratio: f64, rng: &mut R) -> Result<MixtureExample> {
    if !(0.0..=1.0).contains(&overlap_ratio) {
        return Err(Error::signal(format!("overlap ratio {overlap_ratio} outside [0, 1]")));
    }
    if cfg.num_sources != 2 {
        return Err(Error::config("sparse mixtures need exactly two sources"));
    }
    let mut sources = synth_sources(cfg, rng)?;
    let union = cfg.num_samples();
    let overlap = (overlap_ratio * union as f64).round() as usize;
    let first_len = (union + overlap) / 2;
    let second_start = first_len - overlap;
    if union < 2 || first_len == 0 || second_start >= union {
        return Err(Error::config("segment too short for a sparse mixture"));
    }
    let leader = rng.gen_range(0..2);
    for (k, src) in sources.iter_mut().enumerate() {
        let range = if k == leader { 0..first_len } else { second_start..union };
        let gated: Vec<f64> = src
            .samples()
            .iter()
            .enumerate()
            .map(|(i, v)| if range.contains(&i) { *v } else { 0.0 })
            .collect();
        *src = Waveform::from_samples(gated)?;
    }
    let gains = draw_gains(cfg, rng);
    let mut example = mix_sources(&sources, &gains)?;
    example.overlap_ratio = Some(overlap_ratio);
    Ok(example)
}
