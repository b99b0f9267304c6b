//! Bounded generate, judge and regenerate loop.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::text::{JUDGE_QUESTION, REGENERATE};
use crate::graph::{embed_kinematic, Embedding};
use crate::grpo::decode_completion;
use crate::motion::Motion;
use crate::rng;
use crate::rvq::TokenizerModel;
use crate::seq::{sample, PolicyModel, SampleConfig, TextVocab};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReflectConfig {
    /// Judgement rounds after the first generation; 0 disables reflection.
    pub max_rounds: usize,
    /// Minimum descriptor similarity to the target; `None` trusts the
    /// model's verdict alone.
    pub gate_threshold: Option<f64>,
    /// Require a "yes" verdict from the model.
    pub use_verdict: bool,
    pub temperature: f64,
    pub max_new: usize,
    pub verdict_max: usize,
}

impl Default for ReflectConfig {
    fn default() -> Self {
        Self {
            max_rounds: 3,
            gate_threshold: Some(0.8),
            use_verdict: true,
            temperature: 1.0,
            max_new: 96,
            verdict_max: 40,
        }
    }
}

impl ReflectConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.temperature >= 0.0) {
            v.push("reflect.temperature must be >= 0".into());
        }
        if self.max_new < 2 {
            v.push("reflect.max_new must be >= 2".into());
        }
        if self.gate_threshold.is_some_and(|t| !(-1.0..=1.0).contains(&t)) {
            v.push("reflect.gate_threshold must be in [-1, 1]".into());
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReflectOutcome {
    pub motion: Motion,
    /// Number of motion generations.
    pub rounds: usize,
    /// Prompt followed by every generated and template token.
    pub transcript: Vec<u32>,
    /// Cosine of the returned motion to the target embedding, if one was given.
    pub similarity: Option<f64>,
}

/// Generates a motion for `prompt`; while rounds remain and either the
/// model's verdict or the similarity gate rejects it, appends the judgement
/// and the regeneration phrase and generates again. Returns the last
/// decodable motion.
pub fn reflect_generate(
    pm: &PolicyModel,
    tk: &TokenizerModel,
    tv: &TextVocab,
    prompt: &[u32],
    target: Option<&Embedding>,
    cfg: &ReflectConfig,
    seed: u64,
) -> Result<ReflectOutcome> {
    let v = pm.vocab;
    let span_cfg = SampleConfig {
        temperature: cfg.temperature,
        max_new: cfg.max_new,
        stop_after_span: true,
        force_open: true,
        stop_before_open: false,
    };
    let verdict_cfg = SampleConfig {
        temperature: cfg.temperature,
        max_new: cfg.verdict_max,
        stop_after_span: false,
        force_open: false,
        stop_before_open: true,
    };
    let judge = tv.encode(JUDGE_QUESTION);
    let regen = tv.encode(REGENERATE);
    let mut transcript = prompt.to_vec();
    let mut last: Option<(Motion, Option<f64>)> = None;
    let mut rounds = 0;
    loop {
        rounds += 1;
        let s = sample(pm, &transcript, &span_cfg, rng::derive_indexed(seed, "span", rounds as u64))?;
        let motion = if s.truncated {
            None
        } else {
            decode_completion(s.generated(), &v, tk).ok().filter(|m| m.num_frames() >= 2)
        };
        let Some(m) = motion else {
            // a malformed span is dropped and regenerated without judgement
            if rounds > cfg.max_rounds || transcript.len() + regen.len() + cfg.max_new > pm.config.context {
                break;
            }
            transcript.extend(&regen);
            continue;
        };
        transcript = s.seq.ids;
        let sim = target.map(|t| embed_kinematic(&m).cosine(t));
        last = Some((m, sim));
        if rounds > cfg.max_rounds {
            break;
        }
        let room = transcript.len() + judge.len() + cfg.verdict_max + regen.len() + cfg.max_new;
        if room > pm.config.context {
            break;
        }
        transcript.extend(&judge);
        let verdict = sample(pm, &transcript, &verdict_cfg, rng::derive_indexed(seed, "verdict", rounds as u64))?;
        let mut said: Vec<u32> = verdict.generated().to_vec();
        if said.last() == Some(&v.eos()) {
            said.pop();
        }
        let model_ok = !cfg.use_verdict || tv.decode(&said).starts_with("yes");
        let gate_ok = match (cfg.gate_threshold, sim) {
            (Some(t), Some(s)) => s >= t,
            _ => true,
        };
        transcript.extend(&said);
        if model_ok && gate_ok {
            break;
        }
        if !tv.decode(&said).ends_with(REGENERATE) {
            transcript.extend(&regen);
        }
    }
    match last {
        Some((motion, similarity)) => Ok(ReflectOutcome {
            motion,
            rounds,
            transcript,
            similarity,
        }),
        None => Err(Error::GenerationFailed { rounds, transcript }),
    }
}
