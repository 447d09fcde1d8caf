//! Learned convolutional front end and dual-path chunking.
//!
//! The encoder is a strided 1-D convolution (`N` filters of width `W`); the
//! decoder is the matching transposed convolution. Neither has a bias.
//! [`segment`] cuts the encoded `[N, L]` sequence into overlapping chunks
//! `[N, K, S]` and [`merge`] undoes it exactly.

use sepforge_autodiff::{CustomBackward, Tape, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderActivation {
    Relu,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodecConfig {
    pub window: usize,
    pub stride: usize,
    pub n_filters: usize,
    pub encoder_activation: EncoderActivation,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            window: 16,
            stride: 8,
            n_filters: 32,
            encoder_activation: EncoderActivation::Relu,
        }
    }
}

impl CodecConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.stride == 0 || self.stride > self.window {
            return Err(Error::config(format!(
                "codec needs 0 < stride <= window, got stride {} and window {}",
                self.stride, self.window
            )));
        }
        if self.n_filters == 0 {
            return Err(Error::config("codec needs at least one filter"));
        }
        Ok(())
    }

    /// Number of encoder frames for `t` samples.
    pub fn frames(&self, t: usize) -> Option<usize> {
        (t >= self.window).then(|| (t - self.window) / self.stride + 1)
    }

    /// Number of samples produced by decoding `l` frames.
    pub fn decoded_len(&self, l: usize) -> usize {
        (l - 1) * self.stride + self.window
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChunkConfig {
    pub chunk_size: usize,
    pub hop: usize,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        Self {
            chunk_size: 100,
            hop: 50,
        }
    }
}

impl ChunkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chunk_size == 0 || self.hop == 0 || self.hop > self.chunk_size {
            return Err(Error::config(format!(
                "chunking needs 0 < hop <= chunk_size, got hop {} and chunk_size {}",
                self.hop, self.chunk_size
            )));
        }
        Ok(())
    }

    /// Padding needed to tile `frames` frames exactly.
    pub fn plan(&self, frames: usize) -> PaddingRecord {
        let s = self.chunk_size;
        let chunks = if frames <= s {
            1
        } else {
            (frames - s).div_ceil(self.hop) + 1
        };
        PaddingRecord {
            original_len: frames,
            padded_len: (chunks - 1) * self.hop + s,
            chunks,
        }
    }
}

/// What [`segment`] did, so that [`merge`] can invert it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PaddingRecord {
    pub original_len: usize,
    pub padded_len: usize,
    pub chunks: usize,
}

impl PaddingRecord {
    pub fn padding(&self) -> usize {
        self.padded_len - self.original_len
    }
}

/// Encodes `[1, t]` samples into `[N, L]` frames.
pub fn encode(tape: &mut Tape, x: Var, kernels: Var, cfg: &CodecConfig) -> Result<Var> {
    let t = *tape.shape(x).last().expect("non-empty shape");
    if t < cfg.window {
        return Err(Error::signal(format!(
            "input of {t} samples is shorter than the encoder window {}",
            cfg.window
        )));
    }
    let y = tape.conv1d(x, kernels, cfg.stride)?;
    Ok(match cfg.encoder_activation {
        EncoderActivation::Relu => tape.relu(y),
        EncoderActivation::None => y,
    })
}

/// Decodes `[N, L]` frames to `[1, out_len]` samples (trimmed or
/// zero-padded when `out_len` is given).
pub fn decode(tape: &mut Tape, rep: Var, kernels: Var, cfg: &CodecConfig, out_len: Option<usize>) -> Result<Var> {
    let n = tape.shape(rep)[0];
    if n != cfg.n_filters || tape.shape(rep).len() != 2 {
        return Err(Error::config(format!(
            "decoder expects [{}, L] frames, got {:?}",
            cfg.n_filters,
            tape.shape(rep)
        )));
    }
    let y = tape.conv1d_transpose(rep, kernels, cfg.stride)?;
    match out_len {
        Some(len) if len != tape.shape(y)[1] => Ok(tape.resize_last(y, len)?),
        _ => Ok(y),
    }
}

fn segment_values(rep: &[f64], n: usize, cfg: &ChunkConfig, rec: &PaddingRecord) -> Vec<f64> {
    let (s, l, k) = (cfg.chunk_size, rec.original_len, rec.chunks);
    let mut out = vec![0.0; n * k * s];
    for c in 0..n {
        let row = &rep[c * l..(c + 1) * l];
        for j in 0..k {
            let start = j * cfg.hop;
            let avail = l.saturating_sub(start).min(s);
            let dst = &mut out[(c * k + j) * s..(c * k + j) * s + avail];
            dst.copy_from_slice(&row[start..start + avail]);
        }
    }
    out
}

/// Overlap-add of chunks back to `original_len` frames, each chunk sample
/// scaled by `weight(frame)`.
fn overlap_add(chunks: &[f64], n: usize, cfg: &ChunkConfig, rec: &PaddingRecord, weight: &[f64]) -> Vec<f64> {
    let (s, l, k) = (cfg.chunk_size, rec.original_len, rec.chunks);
    let mut out = vec![0.0; n * l];
    for c in 0..n {
        let row = &mut out[c * l..(c + 1) * l];
        for j in 0..k {
            let start = j * cfg.hop;
            let avail = l.saturating_sub(start).min(s);
            let src = &chunks[(c * k + j) * s..(c * k + j) * s + avail];
            for (i, v) in src.iter().enumerate() {
                row[start + i] += v * weight[start + i];
            }
        }
    }
    out
}

fn overlap_counts(cfg: &ChunkConfig, rec: &PaddingRecord) -> Vec<f64> {
    let mut counts = vec![0.0; rec.original_len];
    for j in 0..rec.chunks {
        let start = j * cfg.hop;
        for c in counts.iter_mut().skip(start).take(cfg.chunk_size) {
            *c += 1.0;
        }
    }
    counts
}

#[derive(Debug)]
struct SegmentOp {
    cfg: ChunkConfig,
    record: PaddingRecord,
}

impl CustomBackward for SegmentOp {
    fn name(&self) -> &'static str {
        "segment"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, g: &[f64]) -> Vec<Option<Vec<f64>>> {
        let n = inputs[0].shape()[0];
        let ones = vec![1.0; self.record.original_len];
        vec![Some(overlap_add(g, n, &self.cfg, &self.record, &ones))]
    }
}

#[derive(Debug)]
struct MergeOp {
    cfg: ChunkConfig,
    record: PaddingRecord,
    inv_counts: Vec<f64>,
}

impl CustomBackward for MergeOp {
    fn name(&self) -> &'static str {
        "merge"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, g: &[f64]) -> Vec<Option<Vec<f64>>> {
        let n = inputs[0].shape()[0];
        let scaled: Vec<f64> = g
            .chunks_exact(self.record.original_len)
            .flat_map(|row| row.iter().zip(&self.inv_counts).map(|(g, w)| g * w))
            .collect();
        vec![Some(segment_values(&scaled, n, &self.cfg, &self.record))]
    }
}

/// Cuts `[N, L]` into `[N, K, S]` chunks with right zero padding.
pub fn segment(tape: &mut Tape, rep: Var, cfg: &ChunkConfig) -> Result<(Var, PaddingRecord)> {
    cfg.validate()?;
    let &[n, l] = tape.shape(rep) else {
        return Err(Error::config(format!(
            "segment expects [N, L], got {:?}",
            tape.shape(rep)
        )));
    };
    let record = cfg.plan(l);
    let data = segment_values(tape.data(rep), n, cfg, &record);
    let value = Tensor::new(&[n, record.chunks, cfg.chunk_size], data)?;
    let op = SegmentOp {
        cfg: cfg.clone(),
        record,
    };
    Ok((tape.custom(&[rep], value, Box::new(op)), record))
}

/// Overlap-adds `[N, K, S]` chunks back to `[N, L]`, dividing each frame by
/// the number of chunks covering it.
pub fn merge(tape: &mut Tape, chunks: Var, cfg: &ChunkConfig, record: &PaddingRecord) -> Result<Var> {
    let &[n, k, s] = tape.shape(chunks) else {
        return Err(Error::config(format!(
            "merge expects [N, K, S], got {:?}",
            tape.shape(chunks)
        )));
    };
    if k != record.chunks || s != cfg.chunk_size || cfg.plan(record.original_len) != *record {
        return Err(Error::config(format!(
            "chunks {:?} do not match padding record {record:?}",
            tape.shape(chunks)
        )));
    }
    let inv_counts: Vec<f64> = overlap_counts(cfg, record).iter().map(|c| 1.0 / c).collect();
    let data = overlap_add(tape.data(chunks), n, cfg, record, &inv_counts);
    let value = Tensor::new(&[n, record.original_len], data)?;
    let op = MergeOp {
        cfg: cfg.clone(),
        record: *record,
        inv_counts,
    };
    Ok(tape.custom(&[chunks], value, Box::new(op)))
}
