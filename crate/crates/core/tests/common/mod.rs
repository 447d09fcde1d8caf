#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sepforge_autodiff::Tensor;
use sepforge_core::{HeadMode, Model, ModelConfig};

/// Gradient-check scale: N=8, H=8, B=2, two heads, two sources. Chunks of
/// 16 frames (hop 8) give several chunks for 400-sample inputs, so both
/// the intra and the inter paths see sequences longer than one.
pub fn micro_config(head: HeadMode) -> ModelConfig {
    let mut cfg = ModelConfig::desk(head);
    cfg.codec.n_filters = 8;
    cfg.chunk.chunk_size = 16;
    cfg.chunk.hop = 8;
    cfg.separator.n_blocks = 2;
    cfg.separator.feature_dim = 8;
    cfg.separator.lstm_hidden = 8;
    cfg.separator.n_heads = 2;
    cfg
}

pub fn micro_model(head: HeadMode, seed: u64) -> Model {
    Model::init(micro_config(head), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

pub fn random(shape: &[usize], rng: &mut ChaCha8Rng, scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}
