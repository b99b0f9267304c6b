//! Semantic and physical rewards and their mix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Embedding;
use crate::motion::{extract_foot_states, FootState, Motion, DEFAULT_CONTACT_HEIGHT, DEFAULT_CONTACT_SPEED};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub lambda_sem: f64,
    pub lambda_phy: f64,
    /// Softmax temperature of the semantic reward.
    pub tau: f64,
    pub group_size: usize,
    pub clip_eps: f64,
    pub kl_beta: f64,
    pub std_floor: f64,
    /// Height below which a foot joint counts as planted.
    pub contact_height: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            lambda_sem: 1.0,
            lambda_phy: 1.0,
            tau: 0.1,
            group_size: 8,
            clip_eps: 0.2,
            kl_beta: 0.01,
            std_floor: 1e-6,
            contact_height: DEFAULT_CONTACT_HEIGHT,
        }
    }
}

impl RewardConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.lambda_sem >= 0.0) || !(self.lambda_phy >= 0.0) {
            v.push("reward.lambda_sem and reward.lambda_phy must be >= 0".into());
        } else if !(self.lambda_sem + self.lambda_phy > 0.0) {
            v.push("reward.lambda_sem + reward.lambda_phy must be > 0".into());
        }
        if !(self.tau > 0.0) {
            v.push("reward.tau must be > 0".into());
        }
        if self.group_size < 2 {
            v.push("reward.group_size must be >= 2".into());
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            v.push("reward.clip_eps must be in (0, 1)".into());
        }
        if !(self.kl_beta >= 0.0) {
            v.push("reward.kl_beta must be >= 0".into());
        }
        if !(self.std_floor > 0.0) {
            v.push("reward.std_floor must be > 0".into());
        }
        if !(self.contact_height > 0.0) {
            v.push("reward.contact_height must be > 0".into());
        }
        v
    }
}

/// Row softmax of `sim[i][j] / tau`, returning the diagonal entry of each
/// row: the reward of motion `i` against its own instruction.
pub fn semantic_reward_from_similarity(sim: &[Vec<f64>], tau: f64) -> Result<Vec<f64>> {
    let n = sim.len();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    if sim.iter().any(|r| r.len() != n) {
        return Err(Error::ShapeMismatch(format!("similarity matrix must be {n}x{n}")));
    }
    Ok(sim
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|s| ((s - m) / tau).exp()).sum();
            ((row[i] - m) / tau).exp() / z
        })
        .collect())
}

/// Semantic reward of each generated embedding against the instruction
/// embeddings of the same batch.
pub fn semantic_reward(generated: &[Embedding], instructions: &[Embedding], tau: f64) -> Result<Vec<f64>> {
    if generated.len() != instructions.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} generated motions but {} instructions",
            generated.len(),
            instructions.len()
        )));
    }
    let sim: Vec<Vec<f64>> = generated
        .iter()
        .map(|g| instructions.iter().map(|t| g.cosine(t)).collect())
        .collect();
    semantic_reward_from_similarity(&sim, tau)
}

/// Negative mean squared horizontal foot velocity over planted frames.
pub fn physical_reward_from_feet(feet: &FootState, contact_height: f64) -> f64 {
    let n = feet.num_frames();
    if n == 0 {
        return 0.0;
    }
    let mut s = 0.0;
    for track in &feet.tracks {
        for t in 0..n {
            if track.height[t] <= contact_height {
                let v = track.velocity[t];
                s += v[0] * v[0] + v[1] * v[1];
            }
        }
    }
    -s / n as f64
}

pub fn physical_reward(m: &Motion, contact_height: f64) -> Result<f64> {
    let feet = extract_foot_states(m, contact_height, DEFAULT_CONTACT_SPEED)?;
    Ok(physical_reward_from_feet(&feet, contact_height))
}

pub fn total_reward(sem: f64, phy: f64, cfg: &RewardConfig) -> f64 {
    cfg.lambda_sem * sem + cfg.lambda_phy * phy
}

/// Group-relative advantages `(r - mean) / max(std, floor)` with the
/// population standard deviation.
pub fn grpo_advantages(rewards: &[f64], std_floor: f64) -> Vec<f64> {
    let n = rewards.len() as f64;
    if rewards.iter().all(|&r| r == rewards[0]) {
        return vec![0.0; rewards.len()];
    }
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let sd = var.sqrt().max(std_floor);
    let mut a: Vec<f64> = rewards.iter().map(|r| (r - mean) / sd).collect();
    // remove the rounding residue so the group sums to zero
    let resid = a.iter().sum::<f64>() / n;
    a.iter_mut().for_each(|x| *x -= resid);
    a
}
