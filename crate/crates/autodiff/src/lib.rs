//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Operations are recorded eagerly on a [`Tape`] and differentiated with
//! [`Tape::backward`]. The primitive set is deliberately small: matrix
//! products, elementwise maps, softmax, layer norm, strided 1-D
//! (transposed) convolution, a fused LSTM, and shape plumbing. Anything
//! else can be added from outside through [`CustomBackward`].
//!
//! ```
//! use sepforge_autodiff::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let x = tape.param(Tensor::vector(vec![1.0, -2.0, 3.0]).unwrap());
//! let y = tape.mul(x, x).unwrap();
//! let loss = tape.sum(y);
//! tape.backward(loss).unwrap();
//! assert_eq!(tape.grad(x).unwrap(), &[2.0, -4.0, 6.0]);
//! ```

mod error;
mod gemm;
pub mod gradcheck;
mod ops;
mod tape;
mod tensor;

pub use error::{AutodiffError, Result};
pub use gradcheck::{GradCheck, GradCheckReport};
pub use ops::LstmWeights;
pub use tape::{CustomBackward, Tape, Var};
pub use tensor::Tensor;
