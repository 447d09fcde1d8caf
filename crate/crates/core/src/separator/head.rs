//! Output heads. Both merge the chunked separator output back to `[N, L]`
//! and project it to `c * N` channels with a bias-free 1x1 map.

use sepforge_autodiff::{Tape, Var};

use super::HeadMode;
use crate::codec::{merge, ChunkConfig, PaddingRecord};
use crate::error::{Error, Result};

fn project(
    tape: &mut Tape,
    chunks: Var,
    chunk_cfg: &ChunkConfig,
    record: &PaddingRecord,
    weight: Var,
    n_sources: usize,
) -> Result<Vec<Var>> {
    let merged = merge(tape, chunks, chunk_cfg, record)?;
    let n = tape.shape(merged)[0];
    if tape.shape(weight) != [n_sources * n, n] {
        return Err(Error::config(format!(
            "head weight must be [{}, {n}], got {:?}",
            n_sources * n,
            tape.shape(weight)
        )));
    }
    let all = tape.matmul(weight, merged)?;
    (0..n_sources).map(|i| Ok(tape.narrow(all, 0, i * n, n)?)).collect()
}

/// Nonnegative masks `[N, L]`, one per source.
pub fn masks(
    tape: &mut Tape,
    chunks: Var,
    chunk_cfg: &ChunkConfig,
    record: &PaddingRecord,
    weight: Var,
    n_sources: usize,
) -> Result<Vec<Var>> {
    let raw = project(tape, chunks, chunk_cfg, record, weight, n_sources)?;
    Ok(raw.into_iter().map(|m| tape.relu(m)).collect())
}

/// Elementwise product of each mask with the mixture encoding.
pub fn apply_masks(tape: &mut Tape, masks: &[Var], mix_encoding: Var) -> Result<Vec<Var>> {
    masks.iter().map(|&m| Ok(tape.mul(m, mix_encoding)?)).collect()
}

/// Masking head: `M_i ⊙ encoding` with `M_i >= 0`.
#[allow(clippy::too_many_arguments)]
pub fn masking_head(
    tape: &mut Tape,
    mode: HeadMode,
    chunks: Var,
    mix_encoding: Var,
    chunk_cfg: &ChunkConfig,
    record: &PaddingRecord,
    weight: Var,
    n_sources: usize,
) -> Result<Vec<Var>> {
    if mode != HeadMode::Masking {
        return Err(Error::config("masking head called in mapping mode"));
    }
    let m = masks(tape, chunks, chunk_cfg, record, weight, n_sources)?;
    apply_masks(tape, &m, mix_encoding)
}

/// Mapping head: source representations straight from the projection, with
/// no nonlinearity.
pub fn mapping_head(
    tape: &mut Tape,
    mode: HeadMode,
    chunks: Var,
    chunk_cfg: &ChunkConfig,
    record: &PaddingRecord,
    weight: Var,
    n_sources: usize,
) -> Result<Vec<Var>> {
    if mode != HeadMode::Mapping {
        return Err(Error::config("mapping head called in masking mode"));
    }
    project(tape, chunks, chunk_cfg, record, weight, n_sources)
}
