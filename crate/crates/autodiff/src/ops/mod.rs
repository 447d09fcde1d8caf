//! Primitive operations. Each submodule adds recording methods to
//! [`Tape`](crate::Tape) together with the matching backward rules.

pub(crate) mod conv;
pub(crate) mod elementwise;
pub(crate) mod lstm;
pub(crate) mod matmul;
pub(crate) mod reduce;
pub(crate) mod shape;

pub use lstm::LstmWeights;
