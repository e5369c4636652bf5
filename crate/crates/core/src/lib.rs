//! flowkd: normalizing-flow density estimation with teacher→student
//! knowledge distillation.
//!
//! The crate provides a small float64 tensor engine with reverse-mode
//! differentiation, invertible building blocks (ActNorm, PLU-parameterized
//! invertible linear maps, affine coupling, masked autoregressive layers),
//! full flow models with exact log-density and sampling, three distillation
//! objectives over shared and intermediate latents, dataset/toy-density
//! plumbing, and an AdamW training loop with evaluation and throughput
//! benchmarking.

pub mod bijector;
pub mod checkpoint;
pub mod data;
pub mod distill;
pub mod error;
pub mod flow;
pub mod linalg;
pub mod optim;
pub mod tensor;
pub mod train;

pub use error::{FlowError, Result};
pub use tensor::{Graph, Tensor};
