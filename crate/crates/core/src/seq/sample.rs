//! Seeded autoregressive sampling with a grammar mask over motion spans.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::model::PolicyModel;
use super::sequence::TokenSequence;
use super::vocab::Vocab;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    /// 0 selects argmax decoding.
    pub temperature: f64,
    pub max_new: usize,
    /// Stop as soon as the first generated motion span closes.
    pub stop_after_span: bool,
    /// Emit `<Motion>` as the first generated token without sampling it.
    pub force_open: bool,
    /// Stop, without emitting it, when `<Motion>` is drawn.
    pub stop_before_open: bool,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            max_new: 128,
            stop_after_span: false,
            force_open: false,
            stop_before_open: false,
        }
    }
}

/// Tracks span state so that only well-formed continuations are admissible.
///
/// Outside a span: text, `<Motion>` and `<EOS>`. Inside: the code range of
/// the next level, plus `</Motion>` at a frame boundary once a frame exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grammar {
    pub inside: bool,
    /// 0-based level expected next.
    pub next_level: usize,
    pub frames: usize,
}

impl Grammar {
    pub fn new() -> Self {
        Self {
            inside: false,
            next_level: 0,
            frames: 0,
        }
    }

    /// Replays a prefix; fails if it is not a valid partial sequence.
    pub fn from_prefix(ids: &[u32], v: &Vocab) -> Result<Self> {
        let mut g = Self::new();
        for (i, &id) in ids.iter().enumerate() {
            if !g.allows(id, v) {
                return Err(Error::CorruptTokens(format!(
                    "prefix token {id} at position {i} violates span grammar"
                )));
            }
            g.advance(id, v);
        }
        Ok(g)
    }

    pub fn allows(&self, id: u32, v: &Vocab) -> bool {
        if self.inside {
            if id == v.motion_close() {
                return self.next_level == 0 && self.frames > 0;
            }
            v.level_range(self.next_level + 1).contains(&id)
        } else {
            (id as usize) < v.n_text || id == v.motion_open() || id == v.eos()
        }
    }

    pub fn advance(&mut self, id: u32, v: &Vocab) {
        if id == v.motion_open() {
            *self = Self {
                inside: true,
                next_level: 0,
                frames: 0,
            };
        } else if id == v.motion_close() {
            self.inside = false;
        } else if self.inside {
            self.next_level += 1;
            if self.next_level == v.levels {
                self.next_level = 0;
                self.frames += 1;
            }
        }
    }
}

impl Default for Grammar {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sampled {
    /// Prefix followed by the generated tokens; `prompt_len` marks the split.
    pub seq: TokenSequence,
    /// A motion span was still open when generation stopped.
    pub truncated: bool,
}

impl Sampled {
    pub fn generated(&self) -> &[u32] {
        &self.seq.ids[self.seq.prompt_len..]
    }
}

/// Draws an index from `logits` restricted to `allowed`. Temperature 0 is
/// argmax with ties to the lowest id.
pub fn pick(logits: &[f64], allowed: &[bool], temperature: f64, r: &mut rng::Rng) -> Option<usize> {
    let cands = || (0..logits.len()).filter(|&i| allowed[i]);
    if temperature <= 0.0 {
        let mut best: Option<usize> = None;
        for i in cands() {
            if best.is_none_or(|b| logits[i] > logits[b]) {
                best = Some(i);
            }
        }
        return best;
    }
    let m = cands().map(|i| logits[i]).fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return None;
    }
    let w: Vec<(usize, f64)> = cands().map(|i| (i, ((logits[i] - m) / temperature).exp())).collect();
    let z: f64 = w.iter().map(|p| p.1).sum();
    let mut u = r.random::<f64>() * z;
    for &(i, p) in &w {
        if u < p {
            return Some(i);
        }
        u -= p;
    }
    w.last().map(|p| p.0)
}

/// Samples a continuation of `prefix` until `<EOS>`, `max_new` tokens or the
/// context limit.
pub fn sample(pm: &PolicyModel, prefix: &[u32], cfg: &SampleConfig, seed: u64) -> Result<Sampled> {
    let v = pm.vocab;
    if prefix.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if prefix.len() > pm.config.context {
        return Err(Error::ContextOverflow {
            len: prefix.len(),
            context: pm.config.context,
        });
    }
    let mut g = Grammar::from_prefix(prefix, &v)?;
    let mut r = rng::seeded(seed);
    let mut st = pm.start_decode();
    let mut logits = Vec::new();
    for &id in prefix {
        logits = pm.step(&mut st, id)?;
    }
    let mut ids = prefix.to_vec();
    let mut allowed = vec![false; v.size()];
    let mut opened = false;
    for n in 0..cfg.max_new {
        if ids.len() >= pm.config.context {
            break;
        }
        let next = if n == 0 && cfg.force_open && !g.inside {
            v.motion_open()
        } else {
            for (i, a) in allowed.iter_mut().enumerate() {
                *a = g.allows(i as u32, &v);
            }
            match pick(&logits, &allowed, cfg.temperature, &mut r) {
                Some(i) => i as u32,
                None => break,
            }
        };
        if cfg.stop_before_open && next == v.motion_open() {
            break;
        }
        g.advance(next, &v);
        ids.push(next);
        opened |= next == v.motion_open();
        if next == v.eos() || (cfg.stop_after_span && opened && next == v.motion_close()) {
            break;
        }
        if ids.len() < pm.config.context && n + 1 < cfg.max_new {
            logits = pm.step(&mut st, next)?;
        }
    }
    Ok(Sampled {
        seq: TokenSequence {
            ids,
            prompt_len: prefix.len(),
        },
        truncated: g.inside,
    })
}
