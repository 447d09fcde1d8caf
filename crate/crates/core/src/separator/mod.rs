//! The attention-augmented dual-path separator and the end-to-end model.

mod block;
mod head;

pub use block::{
    attention_sublayer, attention_weights, attn_aug_block, improved_feedforward, run_separator, AttentionVars,
    BlockVars, FeedForwardVars, PathVars,
};
pub use head::{apply_masks, mapping_head, masking_head, masks};

use rand::Rng;
use sepforge_autodiff::{Tape, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::codec::{decode, encode, segment, ChunkConfig, CodecConfig, EncoderActivation};
use crate::error::{Error, Result};
use crate::params::{Binder, ParamStore};
use crate::signal::Waveform;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadMode {
    Masking,
    Mapping,
}

impl std::str::FromStr for HeadMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "masking" => Ok(Self::Masking),
            "mapping" => Ok(Self::Mapping),
            _ => Err(Error::config(format!(
                "unknown head {s:?} (expected masking or mapping)"
            ))),
        }
    }
}

impl std::fmt::Display for HeadMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Masking => "masking",
            Self::Mapping => "mapping",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeparatorConfig {
    pub n_blocks: usize,
    pub feature_dim: usize,
    pub lstm_hidden: usize,
    pub n_heads: usize,
    pub head: HeadMode,
    pub n_sources: usize,
    pub attention_enabled: bool,
    pub norm_eps: f64,
}

impl Default for SeparatorConfig {
    fn default() -> Self {
        Self {
            n_blocks: 3,
            feature_dim: 32,
            lstm_hidden: 32,
            n_heads: 2,
            head: HeadMode::Masking,
            n_sources: 2,
            attention_enabled: true,
            norm_eps: 1e-8,
        }
    }
}

impl SeparatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_blocks < 1 {
            return Err(Error::config("separator needs at least one block"));
        }
        if self.n_sources < 2 {
            return Err(Error::config(format!("n_sources must be >= 2, got {}", self.n_sources)));
        }
        if self.n_heads == 0 || !self.feature_dim.is_multiple_of(self.n_heads) {
            return Err(Error::config(format!(
                "feature_dim {} is not divisible by n_heads {}",
                self.feature_dim, self.n_heads
            )));
        }
        if self.lstm_hidden == 0 {
            return Err(Error::config("lstm_hidden must be positive"));
        }
        if self.norm_eps.is_nan() || self.norm_eps <= 0.0 {
            return Err(Error::config("norm_eps must be positive"));
        }
        Ok(())
    }
}

/// Everything needed to build a model.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub codec: CodecConfig,
    pub chunk: ChunkConfig,
    pub separator: SeparatorConfig,
}

impl ModelConfig {
    /// Desk-scale model with the given head; the encoder activation follows
    /// the head (ReLU for masking only).
    pub fn desk(head: HeadMode) -> Self {
        let mut cfg = Self::default();
        cfg.set_head(head);
        cfg
    }

    pub fn set_head(&mut self, head: HeadMode) {
        self.separator.head = head;
        self.codec.encoder_activation = match head {
            HeadMode::Masking => EncoderActivation::Relu,
            HeadMode::Mapping => EncoderActivation::None,
        };
    }

    pub fn validate(&self) -> Result<()> {
        self.codec.validate()?;
        self.chunk.validate()?;
        self.separator.validate()?;
        if self.codec.n_filters != self.separator.feature_dim {
            return Err(Error::config(format!(
                "codec n_filters {} must equal separator feature_dim {}",
                self.codec.n_filters, self.separator.feature_dim
            )));
        }
        let relu = self.codec.encoder_activation == EncoderActivation::Relu;
        if relu != (self.separator.head == HeadMode::Masking) {
            return Err(Error::config(
                "encoder activation must be relu for the masking head and none for the mapping head",
            ));
        }
        Ok(())
    }
}

/// Tape outputs of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// Encoder output `[N, L]`.
    pub mix_encoding: Var,
    /// Per-source representations `[N, L]` fed to the decoder.
    pub representations: Vec<Var>,
    /// Per-source waveforms `[1, t]`.
    pub sources: Vec<Var>,
}

/// A model: configuration plus named parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl Model {
    pub fn init<R: Rng>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let params = init_params(&config, rng)?;
        Ok(Self { config, params })
    }

    pub fn n_blocks(&self) -> usize {
        self.config.separator.n_blocks
    }

    /// Builds the forward graph for `x` (`[1, t]`), applying the first
    /// `early_break` separator blocks.
    pub fn forward(
        &self,
        tape: &mut Tape,
        binder: &mut Binder<'_>,
        x: Var,
        early_break: usize,
    ) -> Result<ForwardOutput> {
        let cfg = &self.config;
        let sep = &cfg.separator;
        if early_break < 1 || early_break > sep.n_blocks {
            return Err(Error::config(format!(
                "early-break index {early_break} outside 1..={}",
                sep.n_blocks
            )));
        }
        let t = *tape.shape(x).last().expect("non-empty shape");
        let enc_k = binder.var(tape, "encoder.kernels")?;
        let mix_encoding = encode(tape, x, enc_k, &cfg.codec)?;
        let (chunks, record) = segment(tape, mix_encoding, &cfg.chunk)?;
        let blocks = (0..early_break)
            .map(|b| BlockVars::bind(tape, binder, b, sep.attention_enabled))
            .collect::<Result<Vec<_>>>()?;
        let out = run_separator(tape, chunks, &blocks, early_break, sep.n_heads, sep.norm_eps)?;
        let head_w = binder.var(tape, "head.weight")?;
        let representations = match sep.head {
            HeadMode::Masking => masking_head(
                tape,
                sep.head,
                out,
                mix_encoding,
                &cfg.chunk,
                &record,
                head_w,
                sep.n_sources,
            )?,
            HeadMode::Mapping => mapping_head(tape, sep.head, out, &cfg.chunk, &record, head_w, sep.n_sources)?,
        };
        let dec_k = binder.var(tape, "decoder.kernels")?;
        let sources = representations
            .iter()
            .map(|&r| decode(tape, r, dec_k, &cfg.codec, Some(t)))
            .collect::<Result<Vec<_>>>()?;
        Ok(ForwardOutput {
            mix_encoding,
            representations,
            sources,
        })
    }

    /// Separates `x` into `c` waveforms of the same length.
    pub fn separate(&self, x: &Waveform, early_break: usize) -> Result<Vec<Waveform>> {
        let mut tape = Tape::new();
        let mut binder = Binder::new(&self.params);
        let input = tape.constant(Tensor::new(&[1, x.len()], x.samples().to_vec())?);
        let out = self.forward(&mut tape, &mut binder, input, early_break)?;
        out.sources
            .iter()
            .map(|&s| Waveform::new(tape.data(s).to_vec(), x.sample_rate()))
            .collect()
    }
}

fn init_params<R: Rng>(cfg: &ModelConfig, rng: &mut R) -> Result<ParamStore> {
    let n = cfg.separator.feature_dim;
    let h = cfg.separator.lstm_hidden;
    let w = cfg.codec.window;
    let c = cfg.separator.n_sources;
    let mut p = ParamStore::new();
    p.insert_uniform("encoder.kernels", &[n, 1, w], w, rng)?;
    for b in 0..cfg.separator.n_blocks {
        for path in ["intra", "inter"] {
            let pre = block::path_prefix(b, path);
            if cfg.separator.attention_enabled {
                for name in ["q", "k", "v", "o"] {
                    p.insert_uniform(&format!("{pre}.attn.w{name}"), &[n, n], n, rng)?;
                    p.insert_full(&format!("{pre}.attn.b{name}"), &[n], 0.0)?;
                }
                p.insert_full(&format!("{pre}.attn_norm.gain"), &[n], 1.0)?;
                p.insert_full(&format!("{pre}.attn_norm.bias"), &[n], 0.0)?;
            }
            for dir in ["fwd", "bwd"] {
                p.insert_uniform(&format!("{pre}.lstm.{dir}.w_ih"), &[n, 4 * h], h, rng)?;
                p.insert_uniform(&format!("{pre}.lstm.{dir}.w_hh"), &[h, 4 * h], h, rng)?;
                p.insert_uniform(&format!("{pre}.lstm.{dir}.bias"), &[4 * h], h, rng)?;
            }
            p.insert_uniform(&format!("{pre}.ff_proj.weight"), &[2 * h, n], 2 * h, rng)?;
            p.insert_uniform(&format!("{pre}.ff_proj.bias"), &[n], 2 * h, rng)?;
            p.insert_full(&format!("{pre}.ff_norm.gain"), &[n], 1.0)?;
            p.insert_full(&format!("{pre}.ff_norm.bias"), &[n], 0.0)?;
        }
    }
    p.insert_uniform("head.weight", &[c * n, n], n, rng)?;
    p.insert_uniform("decoder.kernels", &[n, 1, w], w, rng)?;
    Ok(p)
}
