//! The attention-augmented dual-path block.
//!
//! Each path (intra-chunk, then inter-chunk) runs two post-norm residual
//! sublayers: multi-head self-attention, then a bidirectional LSTM followed
//! directly by a linear projection. There is no activation between the LSTM
//! and the projection, and no positional encoding.

use sepforge_autodiff::{LstmWeights, Tape, Var};

use crate::error::{Error, Result};
use crate::params::Binder;

/// Tape handles for one attention sublayer. Projections are `[N, N]`
/// weights applied as `x * W + b`.
#[derive(Clone, Copy, Debug)]
pub struct AttentionVars {
    pub wq: Var,
    pub bq: Var,
    pub wk: Var,
    pub bk: Var,
    pub wv: Var,
    pub bv: Var,
    pub wo: Var,
    pub bo: Var,
    pub norm_gain: Var,
    pub norm_bias: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct FeedForwardVars {
    pub lstm_fwd: LstmWeights,
    pub lstm_bwd: LstmWeights,
    /// `[2H, N]`.
    pub proj_w: Var,
    pub proj_b: Var,
    pub norm_gain: Var,
    pub norm_bias: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct PathVars {
    pub attention: Option<AttentionVars>,
    pub feedforward: FeedForwardVars,
}

#[derive(Clone, Copy, Debug)]
pub struct BlockVars {
    pub intra: PathVars,
    pub inter: PathVars,
}

pub(crate) fn path_prefix(block: usize, path: &str) -> String {
    format!("blocks.{block}.{path}")
}

impl BlockVars {
    pub fn bind(tape: &mut Tape, binder: &mut Binder<'_>, block: usize, attention: bool) -> Result<Self> {
        Ok(Self {
            intra: PathVars::bind(tape, binder, &path_prefix(block, "intra"), attention)?,
            inter: PathVars::bind(tape, binder, &path_prefix(block, "inter"), attention)?,
        })
    }
}

impl PathVars {
    pub fn bind(tape: &mut Tape, binder: &mut Binder<'_>, prefix: &str, attention: bool) -> Result<Self> {
        let mut p = |name: &str| binder.var(tape, &format!("{prefix}.{name}"));
        let attention = if attention {
            Some(AttentionVars {
                wq: p("attn.wq")?,
                bq: p("attn.bq")?,
                wk: p("attn.wk")?,
                bk: p("attn.bk")?,
                wv: p("attn.wv")?,
                bv: p("attn.bv")?,
                wo: p("attn.wo")?,
                bo: p("attn.bo")?,
                norm_gain: p("attn_norm.gain")?,
                norm_bias: p("attn_norm.bias")?,
            })
        } else {
            None
        };
        let feedforward = FeedForwardVars {
            lstm_fwd: LstmWeights {
                w_ih: p("lstm.fwd.w_ih")?,
                w_hh: p("lstm.fwd.w_hh")?,
                bias: p("lstm.fwd.bias")?,
            },
            lstm_bwd: LstmWeights {
                w_ih: p("lstm.bwd.w_ih")?,
                w_hh: p("lstm.bwd.w_hh")?,
                bias: p("lstm.bwd.bias")?,
            },
            proj_w: p("ff_proj.weight")?,
            proj_b: p("ff_proj.bias")?,
            norm_gain: p("ff_norm.gain")?,
            norm_bias: p("ff_norm.bias")?,
        };
        Ok(Self { attention, feedforward })
    }
}

/// `(batch, steps, features)` of a `[T, N]` or `[B, T, N]` input.
fn seq_dims(tape: &Tape, x: Var) -> Result<(usize, usize, usize)> {
    match *tape.shape(x) {
        [t, n] => Ok((1, t, n)),
        [b, t, n] => Ok((b, t, n)),
        _ => Err(Error::config(format!(
            "sequence input must be [T, N] or [B, T, N], got {:?}",
            tape.shape(x)
        ))),
    }
}

fn linear(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = tape.matmul(x, w)?;
    Ok(tape.add_bias(y, b)?)
}

struct Heads {
    rows: Var,
    weights: Var,
    v: Var,
    dims: (usize, usize, usize, usize),
}

fn attention_heads(tape: &mut Tape, x: Var, p: &AttentionVars, n_heads: usize) -> Result<Heads> {
    let (b, t, n) = seq_dims(tape, x)?;
    if n_heads == 0 || !n.is_multiple_of(n_heads) {
        return Err(Error::config(format!(
            "feature size {n} is not divisible by {n_heads} heads"
        )));
    }
    let d = n / n_heads;
    let rows = tape.reshape(x, &[b * t, n])?;
    let q = linear(tape, rows, p.wq, p.bq)?;
    let k = linear(tape, rows, p.wk, p.bk)?;
    let v = linear(tape, rows, p.wv, p.bv)?;

    let split = |tape: &mut Tape, y: Var, axes: &[usize], last: [usize; 2]| -> Result<Var> {
        let y = tape.reshape(y, &[b, t, n_heads, d])?;
        let y = tape.permute(y, axes)?;
        Ok(tape.reshape(y, &[b * n_heads, last[0], last[1]])?)
    };
    let qh = split(tape, q, &[0, 2, 1, 3], [t, d])?;
    let kt = split(tape, k, &[0, 2, 3, 1], [d, t])?;
    let vh = split(tape, v, &[0, 2, 1, 3], [t, d])?;

    let scores = tape.matmul(qh, kt)?;
    let scores = tape.scale(scores, 1.0 / (d as f64).sqrt());
    let weights = tape.softmax(scores, 2)?;
    Ok(Heads {
        rows,
        weights,
        v: vh,
        dims: (b, t, n, n_heads),
    })
}

/// Attention weights `[B * heads, T, T]`; row `q` holds the weights that
/// query position `q` gives to every key position.
pub fn attention_weights(tape: &mut Tape, x: Var, p: &AttentionVars, n_heads: usize) -> Result<Var> {
    Ok(attention_heads(tape, x, p, n_heads)?.weights)
}

/// Multi-head scaled dot-product self-attention over the `T` axis, then
/// residual add and layer norm. Accepts `[T, N]` or a batch `[B, T, N]`.
pub fn attention_sublayer(tape: &mut Tape, x: Var, p: &AttentionVars, n_heads: usize, eps: f64) -> Result<Var> {
    let in_shape = tape.shape(x).to_vec();
    let Heads { rows, weights, v, dims } = attention_heads(tape, x, p, n_heads)?;
    let (b, t, n, h) = dims;
    let ctx = tape.matmul(weights, v)?;
    let ctx = tape.reshape(ctx, &[b, h, t, n / h])?;
    let ctx = tape.permute(ctx, &[0, 2, 1, 3])?;
    let ctx = tape.reshape(ctx, &[b * t, n])?;
    let out = linear(tape, ctx, p.wo, p.bo)?;

    let res = tape.add(rows, out)?;
    let y = tape.layer_norm(res, p.norm_gain, p.norm_bias, 1, eps)?;
    Ok(tape.reshape(y, &in_shape)?)
}

/// Bidirectional LSTM, linear projection back to `N` (no activation in
/// between), residual add and layer norm.
pub fn improved_feedforward(tape: &mut Tape, x: Var, p: &FeedForwardVars, eps: f64) -> Result<Var> {
    let in_shape = tape.shape(x).to_vec();
    let (b, t, n) = seq_dims(tape, x)?;
    let seq = tape.reshape(x, &[b, t, n])?;
    let h = tape.lstm(seq, p.lstm_fwd, Some(p.lstm_bwd))?;
    let width = tape.shape(h)[2];
    let h = tape.reshape(h, &[b * t, width])?;
    let out = linear(tape, h, p.proj_w, p.proj_b)?;
    let rows = tape.reshape(x, &[b * t, n])?;
    let res = tape.add(rows, out)?;
    let y = tape.layer_norm(res, p.norm_gain, p.norm_bias, 1, eps)?;
    Ok(tape.reshape(y, &in_shape)?)
}

fn run_path(tape: &mut Tape, x: Var, p: &PathVars, n_heads: usize, eps: f64) -> Result<Var> {
    let x = match &p.attention {
        Some(a) => attention_sublayer(tape, x, a, n_heads, eps)?,
        None => x,
    };
    improved_feedforward(tape, x, &p.feedforward, eps)
}

/// One dual-path block on `[N, K, S]` chunks: the intra pass models each
/// chunk along `S`, then the inter pass models each position along `K`.
pub fn attn_aug_block(tape: &mut Tape, chunks: Var, p: &BlockVars, n_heads: usize, eps: f64) -> Result<Var> {
    if tape.shape(chunks).len() != 3 {
        return Err(Error::config(format!(
            "block expects [N, K, S], got {:?}",
            tape.shape(chunks)
        )));
    }
    tape.mark("separator_block");
    let intra_in = tape.permute(chunks, &[1, 2, 0])?; // [K, S, N]
    let intra = run_path(tape, intra_in, &p.intra, n_heads, eps)?;
    let inter_in = tape.permute(intra, &[1, 0, 2])?; // [S, K, N]
    let inter = run_path(tape, inter_in, &p.inter, n_heads, eps)?;
    Ok(tape.permute(inter, &[2, 1, 0])?)
}

/// Applies the first `early_break` blocks and skips the rest.
pub fn run_separator(
    tape: &mut Tape,
    chunks: Var,
    blocks: &[BlockVars],
    early_break: usize,
    n_heads: usize,
    eps: f64,
) -> Result<Var> {
    if early_break < 1 || early_break > blocks.len() {
        return Err(Error::config(format!(
            "early-break index {early_break} outside 1..={}",
            blocks.len()
        )));
    }
    blocks[..early_break]
        .iter()
        .try_fold(chunks, |x, p| attn_aug_block(tape, x, p, n_heads, eps))
}
