//! Causal sequence model over a unified text and motion vocabulary.

pub mod model;
pub mod sample;
pub mod sequence;
pub mod train;
pub mod vocab;

pub use model::{log_softmax, log_softmax_rows, DecodeState, ForwardCache, PolicyConfig, PolicyModel};
pub use sample::{pick, sample, Grammar, SampleConfig, Sampled};
pub use sequence::{compile_instruction, compile_prompt, MotionTokens, TokenSequence};
pub use train::{clip_grad_norm, sft_step, train_sft, OptimizerKind, OptimizerState, PolicyCheckpoint, SftConfig, SftReport};
pub use vocab::{flatten_tokens, split_words, unflatten_tokens, TextVocab, Token, Vocab};
