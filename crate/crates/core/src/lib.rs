//! Single-channel time-domain speech separation.
//!
//! The pipeline is a learned convolutional encoder, a stack of
//! attention-augmented dual-path blocks, a masking or mapping output head
//! and a transposed-convolution decoder. Training uses permutation
//! invariant SI-SDR loss, optionally with hierarchical constraint training
//! (HCT), which breaks the forward pass early at a sampled depth and
//! down-weights the loss of shallow exits.

pub mod checkpoint;
pub mod codec;
mod error;
pub mod params;
pub mod rng;
pub mod separator;
pub mod signal;
pub mod train;

pub use error::{Error, Result};
pub use separator::{HeadMode, Model, ModelConfig, SeparatorConfig};
pub use signal::{MixtureExample, Waveform};
