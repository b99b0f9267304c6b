//! Group-relative policy optimization with semantic and physical rewards.

pub mod reward;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use reward::{
    grpo_advantages, physical_reward, physical_reward_from_feet, semantic_reward, semantic_reward_from_similarity, total_reward,
    RewardConfig,
};

use crate::error::{Error, Result};
use crate::graph::{embed_kinematic, Embedding};
use crate::motion::Motion;
use crate::rng;
use crate::rvq::TokenizerModel;
use crate::seq::{
    clip_grad_norm, log_softmax_rows, sample, unflatten_tokens, OptimizerState, PolicyModel, SampleConfig, TokenSequence, Vocab,
};

/// One sampled completion and its scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    /// Prompt followed by the completion.
    pub seq: TokenSequence,
    pub truncated: bool,
    #[serde(skip)]
    pub motion: Option<Motion>,
    /// NaN when the completion could not be decoded.
    pub sem: f64,
    pub phy: f64,
    pub reward: f64,
    pub advantage: f64,
}

impl Rollout {
    pub fn decoded(&self) -> bool {
        self.motion.is_some()
    }

    /// Completion positions that enter the surrogate: motion codes and the
    /// closing bracket. The forced opener is not sampled and is skipped.
    pub fn scored_positions(&self, v: &Vocab) -> Vec<usize> {
        (self.seq.prompt_len.max(1)..self.seq.len())
            .filter(|&k| {
                let id = self.seq.ids[k];
                v.is_motion_code(id) || id == v.motion_close()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutGroup {
    pub prompt_index: usize,
    pub rollouts: Vec<Rollout>,
}

impl RolloutGroup {
    /// Recomputes advantages from the current rewards.
    pub fn assign_advantages(&mut self, std_floor: f64) {
        let r: Vec<f64> = self.rollouts.iter().map(|x| x.reward).collect();
        for (x, a) in self.rollouts.iter_mut().zip(grpo_advantages(&r, std_floor)) {
            x.advantage = a;
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GrpoObjective {
    pub loss: f64,
    /// Mean clipped surrogate (to be maximized).
    pub surrogate: f64,
    /// Mean per-token KL(p_old || p_theta).
    pub kl: f64,
    pub clip_fraction: f64,
    pub mean_ratio: f64,
    pub tokens: usize,
}

/// Per-token clipped objective and its derivative with respect to the
/// log-ratio: returns `(objective, d objective / d log r, clipped)`.
pub fn clipped_term(ratio: f64, adv: f64, eps: f64) -> (f64, f64, bool) {
    let unclipped = ratio * adv;
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
    if unclipped <= clipped {
        (unclipped, unclipped, false)
    } else {
        (clipped, 0.0, true)
    }
}

/// Loss `-mean_t min(r_t A, clip(r_t) A) + beta mean_t KL_t` over the scored
/// tokens of every rollout, with its gradient when `want_grad`.
pub fn grpo_objective(
    policy: &PolicyModel,
    old: &PolicyModel,
    groups: &[RolloutGroup],
    cfg: &RewardConfig,
    want_grad: bool,
) -> Result<(GrpoObjective, Option<Vec<f64>>)> {
    if policy.vocab != old.vocab || policy.config != old.config {
        return Err(Error::Config(vec![
            "old policy snapshot does not match the policy vocabulary or config".into(),
        ]));
    }
    let v = policy.vocab;
    let positions: Vec<Vec<Vec<usize>>> = groups
        .iter()
        .map(|g| g.rollouts.iter().map(|r| r.scored_positions(&v)).collect())
        .collect();
    let total: usize = positions.iter().flatten().map(|p| p.len()).sum();
    let mut grad = want_grad.then(|| vec![0.0; policy.num_params()]);
    if total == 0 {
        return Ok((GrpoObjective::default(), grad));
    }
    let norm = 1.0 / total as f64;
    let mut out = GrpoObjective {
        tokens: total,
        ..Default::default()
    };
    for (g, gpos) in groups.iter().zip(&positions) {
        for (r, pos) in g.rollouts.iter().zip(gpos) {
            if pos.is_empty() {
                continue;
            }
            let (logits, cache) = policy.forward_cached(&r.seq.ids)?;
            let lp = log_softmax_rows(&logits);
            let lp_old = old.forward(&r.seq.ids)?;
            let mut dl = want_grad.then(|| Array2::zeros(logits.raw_dim()));
            for &k in pos {
                let row = k - 1;
                let y = r.seq.ids[k] as usize;
                let ratio = (lp[[row, y]] - lp_old[[row, y]]).exp();
                let (obj, dobj, clipped) = clipped_term(ratio, r.advantage, cfg.clip_eps);
                let kl: f64 = (0..v.size())
                    .map(|c| {
                        let po = lp_old[[row, c]].exp();
                        if po > 0.0 {
                            po * (lp_old[[row, c]] - lp[[row, c]])
                        } else {
                            0.0
                        }
                    })
                    .sum();
                out.surrogate += obj * norm;
                out.kl += kl * norm;
                out.mean_ratio += ratio * norm;
                if clipped {
                    out.clip_fraction += norm;
                }
                if let Some(dl) = dl.as_mut() {
                    // d(-obj)/dz = -dobj (onehot - p); d KL/dz = p - p_old
                    for c in 0..v.size() {
                        let p = lp[[row, c]].exp();
                        let onehot = if c == y { 1.0 } else { 0.0 };
                        dl[[row, c]] += norm * (-dobj * (onehot - p) + cfg.kl_beta * (p - lp_old[[row, c]].exp()));
                    }
                }
            }
            if let (Some(dl), Some(gr)) = (dl.as_ref(), grad.as_mut()) {
                policy.backward(&cache, dl, gr);
            }
        }
    }
    out.loss = -out.surrogate + cfg.kl_beta * out.kl;
    Ok((out, grad))
}

/// Per-token probability ratios `p_theta / p_old` over the scored tokens,
/// in rollout order.
pub fn token_ratios(policy: &PolicyModel, old: &PolicyModel, groups: &[RolloutGroup]) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for r in groups.iter().flat_map(|g| &g.rollouts) {
        let pos = r.scored_positions(&policy.vocab);
        if pos.is_empty() {
            continue;
        }
        let lp = policy.forward(&r.seq.ids)?;
        let lo = old.forward(&r.seq.ids)?;
        out.extend(pos.iter().map(|&k| {
            let y = r.seq.ids[k] as usize;
            (lp[[k - 1, y]] - lo[[k - 1, y]]).exp()
        }));
    }
    Ok(out)
}

/// One optimizer update on the GRPO loss; returns the pre-update objective.
pub fn grpo_step(
    policy: &mut PolicyModel,
    old: &PolicyModel,
    groups: &[RolloutGroup],
    cfg: &RewardConfig,
    opt: &mut OptimizerState,
    lr: f64,
    clip_norm: f64,
) -> Result<GrpoObjective> {
    let (obj, grad) = grpo_objective(policy, old, groups, cfg, true)?;
    let mut grad = grad.expect("gradient requested");
    clip_grad_norm(&mut grad, clip_norm);
    opt.apply(&mut policy.params, &grad, lr);
    Ok(obj)
}

/// A prompt for rollouts and the embedding its completion should match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrpoPrompt {
    pub prompt: Vec<u32>,
    pub target: Embedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrpoConfig {
    pub steps: usize,
    /// Distinct prompts per step; the semantic softmax runs over them.
    pub prompts_per_step: usize,
    /// Optimizer updates per rollout batch against the same snapshot.
    pub updates_per_batch: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub temperature: f64,
    pub max_new: usize,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            prompts_per_step: 4,
            updates_per_batch: 2,
            learning_rate: 1e-2,
            clip_norm: 1.0,
            temperature: 1.0,
            max_new: 96,
        }
    }
}

impl GrpoConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.prompts_per_step == 0 {
            v.push("grpo.prompts_per_step must be >= 1".into());
        }
        if self.updates_per_batch == 0 {
            v.push("grpo.updates_per_batch must be >= 1".into());
        }
        if !(self.learning_rate > 0.0) {
            v.push("grpo.learning_rate must be > 0".into());
        }
        if !(self.clip_norm >= 0.0) {
            v.push("grpo.clip_norm must be >= 0".into());
        }
        if !(self.temperature > 0.0) {
            v.push("grpo.temperature must be > 0".into());
        }
        if self.max_new < 2 {
            v.push("grpo.max_new must be >= 2".into());
        }
        v
    }
}

/// Decodes the first motion span of a completion.
pub fn decode_completion(ids: &[u32], v: &Vocab, tk: &TokenizerModel) -> Result<Motion> {
    let open = ids
        .iter()
        .position(|&i| i == v.motion_open())
        .ok_or_else(|| Error::CorruptTokens("no motion span in completion".into()))?;
    let close = ids[open..]
        .iter()
        .position(|&i| i == v.motion_close())
        .ok_or_else(|| Error::CorruptTokens("unclosed motion span".into()))?;
    let ts = unflatten_tokens(&ids[open..open + close + 1], v, 0, tk.config.downsample_factor)?;
    tk.detokenize(&ts)
}

/// Samples `group_size` completions per prompt and scores them. The
/// semantic reward of each completion is a softmax over the step's prompts.
/// Undecodable completions get the batch minimum reward minus one standard
/// deviation.
pub fn collect_rollouts(
    policy: &PolicyModel,
    tk: &TokenizerModel,
    prompts: &[GrpoPrompt],
    indices: &[usize],
    cfg: &GrpoConfig,
    rcfg: &RewardConfig,
    seed: u64,
) -> Result<Vec<RolloutGroup>> {
    let v = policy.vocab;
    let scfg = SampleConfig {
        temperature: cfg.temperature,
        max_new: cfg.max_new,
        stop_after_span: true,
        force_open: true,
        ..Default::default()
    };
    let targets: Vec<&Embedding> = indices.iter().map(|&i| &prompts[i].target).collect();
    let mut groups = Vec::with_capacity(indices.len());
    for (b, &pi) in indices.iter().enumerate() {
        let mut rollouts = Vec::with_capacity(rcfg.group_size);
        for k in 0..rcfg.group_size {
            let s = sample(
                policy,
                &prompts[pi].prompt,
                &scfg,
                rng::derive_indexed(seed, "rollout", (b * rcfg.group_size + k) as u64),
            )?;
            let motion = if s.truncated {
                None
            } else {
                decode_completion(s.generated(), &v, tk).ok().filter(|m| m.num_frames() >= 2)
            };
            let (sem, phy) = match &motion {
                Some(m) => {
                    let e = embed_kinematic(m);
                    let sims: Vec<f64> = targets.iter().map(|t| e.cosine(t)).collect();
                    let mx = sims.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let z: f64 = sims.iter().map(|x| ((x - mx) / rcfg.tau).exp()).sum();
                    let sem = ((sims[b] - mx) / rcfg.tau).exp() / z;
                    (sem, physical_reward(m, rcfg.contact_height)?)
                }
                None => (f64::NAN, f64::NAN),
            };
            rollouts.push(Rollout {
                truncated: s.truncated,
                seq: s.seq,
                reward: if motion.is_some() { total_reward(sem, phy, rcfg) } else { f64::NAN },
                motion,
                sem,
                phy,
                advantage: 0.0,
            });
        }
        groups.push(RolloutGroup {
            prompt_index: pi,
            rollouts,
        });
    }
    let ok: Vec<f64> = groups
        .iter()
        .flat_map(|g| &g.rollouts)
        .filter(|r| r.decoded())
        .map(|r| r.reward)
        .collect();
    let penalty = if ok.is_empty() {
        0.0
    } else {
        let n = ok.len() as f64;
        let mean = ok.iter().sum::<f64>() / n;
        let sd = (ok.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n).sqrt();
        ok.iter().cloned().fold(f64::INFINITY, f64::min) - sd
    };
    for g in &mut groups {
        for r in &mut g.rollouts {
            if !r.decoded() {
                r.reward = penalty;
            }
        }
        g.assign_advantages(rcfg.std_floor);
    }
    Ok(groups)
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrpoLogRecord {
    pub step: usize,
    pub mean_reward: f64,
    /// Means over decoded completions only.
    pub mean_sem: f64,
    pub mean_phy: f64,
    pub kl: f64,
    pub clip_fraction: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GrpoReport {
    pub records: Vec<GrpoLogRecord>,
}

impl GrpoReport {
    /// Mean total reward over the first and last `k` steps.
    pub fn head_tail(&self, k: usize) -> (f64, f64) {
        let r: Vec<f64> = self.records.iter().map(|x| x.mean_reward).collect();
        let k = k.min(r.len()).max(1);
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len().max(1) as f64;
        (mean(&r[..k.min(r.len())]), mean(&r[r.len().saturating_sub(k)..]))
    }
}

fn mean_finite(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.filter(|x| x.is_finite()).fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Runs `cfg.steps` rollout batches. Prompts are visited in seeded shuffled
/// order; `on_step` receives every log record.
#[allow(clippy::too_many_arguments)]
pub fn train_grpo(
    policy: &mut PolicyModel,
    opt: &mut OptimizerState,
    tk: &TokenizerModel,
    prompts: &[GrpoPrompt],
    cfg: &GrpoConfig,
    rcfg: &RewardConfig,
    seed: u64,
    mut on_step: impl FnMut(&GrpoLogRecord),
) -> Result<GrpoReport> {
    let mut v = cfg.violations();
    v.extend(rcfg.violations());
    if !v.is_empty() {
        return Err(Error::Config(v));
    }
    if prompts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if tk.config.levels != policy.vocab.levels || tk.config.codebook_size != policy.vocab.codebook_size {
        return Err(Error::Config(vec![
            "tokenizer levels/codebook size do not match the policy vocabulary".into(),
        ]));
    }
    use rand::seq::SliceRandom;
    let mut r = rng::seeded(rng::derive_seed(seed, "order"));
    let mut order: Vec<usize> = (0..prompts.len()).collect();
    let mut cursor = order.len();
    let b = cfg.prompts_per_step.min(prompts.len());
    let mut report = GrpoReport::default();
    for step in 0..cfg.steps {
        let mut idx = Vec::with_capacity(b);
        while idx.len() < b {
            if cursor == order.len() {
                order.shuffle(&mut r);
                cursor = 0;
            }
            if !idx.contains(&order[cursor]) {
                idx.push(order[cursor]);
            }
            cursor += 1;
        }
        let groups = collect_rollouts(policy, tk, prompts, &idx, cfg, rcfg, rng::derive_indexed(seed, "step", step as u64))?;
        let old = policy.snapshot();
        let mut last = GrpoObjective::default();
        for _ in 0..cfg.updates_per_batch {
            last = grpo_step(policy, &old, &groups, rcfg, opt, cfg.learning_rate, cfg.clip_norm)?;
        }
        let all = || groups.iter().flat_map(|g| &g.rollouts);
        let rec = GrpoLogRecord {
            step,
            mean_reward: mean_finite(all().map(|x| x.reward)),
            mean_sem: mean_finite(all().map(|x| x.sem)),
            mean_phy: mean_finite(all().map(|x| x.phy)),
            kl: last.kl,
            clip_fraction: last.clip_fraction,
            failures: all().filter(|x| !x.decoded()).count(),
        };
        on_step(&rec);
        report.records.push(rec);
    }
    Ok(report)
}
