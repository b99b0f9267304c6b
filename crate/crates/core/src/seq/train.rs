//! Supervised fine-tuning and policy checkpoints.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::PolicyModel;
use super::sequence::TokenSequence;
use super::vocab::TextVocab;
use crate::error::{Error, Result};
use crate::optim::{Adam, Momentum};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerState {
    Sgd(Momentum),
    Adam(Adam),
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, n_params: usize, momentum: f64) -> Self {
        match kind {
            OptimizerKind::Sgd => Self::Sgd(Momentum::new(&[n_params], momentum)),
            OptimizerKind::Adam => Self::Adam(Adam::new(&[n_params])),
        }
    }

    pub fn apply(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        match self {
            Self::Sgd(m) => m.step(&mut [params], &[grad], lr),
            Self::Adam(a) => a.step(&mut [params], &[grad], lr),
        }
    }
}

/// Rescales `grad` in place so its L2 norm is at most `max_norm`; returns
/// the norm before clipping. `max_norm <= 0` disables clipping.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

/// One optimizer update on the teacher-forced loss; returns the pre-update
/// loss.
pub fn sft_step(
    pm: &mut PolicyModel,
    batch: &[TokenSequence],
    lr: f64,
    opt: &mut OptimizerState,
    completion_only: bool,
    clip: f64,
) -> Result<f64> {
    let (loss, mut grad) = pm.nll_and_grad(batch, completion_only)?;
    clip_grad_norm(&mut grad, clip);
    opt.apply(&mut pm.params, &grad, lr);
    Ok(loss)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SftConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub momentum: f64,
    pub completion_only: bool,
    pub clip_norm: f64,
}

impl Default for SftConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 8,
            learning_rate: 1e-2,
            optimizer: OptimizerKind::Sgd,
            momentum: 0.9,
            completion_only: false,
            clip_norm: 1.0,
        }
    }
}

impl SftConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.batch_size == 0 {
            v.push("sft.batch_size must be >= 1".into());
        }
        if !(self.learning_rate > 0.0) {
            v.push("sft.learning_rate must be > 0".into());
        }
        if !(0.0..1.0).contains(&self.momentum) {
            v.push("sft.momentum must be in [0, 1)".into());
        }
        if !(self.clip_norm >= 0.0) {
            v.push("sft.clip_norm must be >= 0".into());
        }
        v
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SftReport {
    pub losses: Vec<f64>,
}

impl SftReport {
    /// Mean loss over the first and last `k` steps.
    pub fn head_tail(&self, k: usize) -> (f64, f64) {
        let k = k.clamp(1, self.losses.len().max(1));
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len().max(1) as f64;
        (
            mean(&self.losses[..k.min(self.losses.len())]),
            mean(&self.losses[self.losses.len().saturating_sub(k)..]),
        )
    }
}

/// Runs `cfg.steps` updates over shuffled mini-batches of `data`.
/// `on_step(step, loss)` is called after every update.
pub fn train_sft(
    pm: &mut PolicyModel,
    opt: &mut OptimizerState,
    data: &[TokenSequence],
    cfg: &SftConfig,
    seed: u64,
    mut on_step: impl FnMut(usize, f64),
) -> Result<SftReport> {
    let v = cfg.violations();
    if !v.is_empty() {
        return Err(Error::Config(v));
    }
    if data.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut r = rng::seeded(seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = order.len();
    let mut report = SftReport::default();
    for step in 0..cfg.steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size.min(data.len()) {
            if cursor == order.len() {
                order.shuffle(&mut r);
                cursor = 0;
            }
            batch.push(data[order[cursor]].clone());
            cursor += 1;
        }
        let loss = sft_step(pm, &batch, cfg.learning_rate, opt, cfg.completion_only, cfg.clip_norm)?;
        report.losses.push(loss);
        on_step(step, loss);
    }
    Ok(report)
}

const FORMAT: &str = "motiongen-policy";
const VERSION: u32 = 1;

/// Versioned policy container: vocabulary layout, text vocabulary, model
/// config and parameters, and optionally the optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyCheckpoint {
    pub format: String,
    pub version: u32,
    pub text_vocab: TextVocab,
    pub model: PolicyModel,
    pub optimizer: Option<OptimizerState>,
}

impl PolicyCheckpoint {
    pub fn new(model: PolicyModel, text_vocab: TextVocab, optimizer: Option<OptimizerState>) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            text_vocab,
            model,
            optimizer,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Self = serde_json::from_slice(&std::fs::read(path)?)?;
        if ck.format != FORMAT || ck.version != VERSION {
            return Err(Error::Format(format!(
                "expected {FORMAT} v{VERSION}, found {} v{}",
                ck.format, ck.version
            )));
        }
        if ck.model.vocab.n_text != ck.text_vocab.len() {
            return Err(Error::ShapeMismatch(format!(
                "vocabulary has {} text ids but text vocabulary lists {}",
                ck.model.vocab.n_text,
                ck.text_vocab.len()
            )));
        }
        if ck.model.params.len() != ck.model.tensors().last().map_or(0, |t| t.1 + t.2) {
            return Err(Error::ShapeMismatch("parameter count does not match config".into()));
        }
        Ok(Self {
            text_vocab: ck.text_vocab.reindex(),
            ..ck
        })
    }
}
