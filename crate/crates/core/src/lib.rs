//! Instruction-driven motion generation at desk scale.
//!
//! The crate covers the full pipeline: a procedural motion corpus
//! ([`motion`]), a residual vector-quantized tokenizer ([`rvq`]), a motion
//! graph compiled into interleaved instructions ([`graph`]), a causal
//! sequence model over a unified text/motion vocabulary ([`seq`]), GRPO
//! fine-tuning with semantic and physical rewards ([`grpo`]), a benchmark
//! harness ([`eval`]) and the staged pipeline driving it all ([`pipeline`]).

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod eval;
pub mod graph;
pub mod grpo;
pub mod hashing;
pub mod motion;
pub mod optim;
pub mod pipeline;
pub mod rng;
pub mod rvq;
pub mod seq;

pub use error::{Error, Result};
