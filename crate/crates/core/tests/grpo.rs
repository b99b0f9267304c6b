use motiongen::grpo::*;
use motiongen::motion::*;
use motiongen::rng;
use motiongen::seq::*;
use proptest::prelude::*;
use rand::Rng as _;

#[test]
fn semantic_reward_examples() {
    assert_eq!(semantic_reward_from_similarity(&[vec![0.3]], 0.1).unwrap(), vec![1.0]);
    let r = semantic_reward_from_similarity(&[vec![1.0, 0.0], vec![0.0, 1.0]], 1.0).unwrap();
    let e = std::f64::consts::E;
    for x in r {
        assert!((x - e / (e + 1.0)).abs() < 1e-12);
    }
    assert!(matches!(
        semantic_reward_from_similarity(&[], 0.1),
        Err(motiongen::Error::EmptyBatch)
    ));
}

fn direct_softmax(sim: &[Vec<f64>], tau: f64) -> Vec<f64> {
    (0..sim.len())
        .map(|i| (sim[i][i] / tau).exp() / sim[i].iter().map(|s| (s / tau).exp()).sum::<f64>())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn semantic_reward_props(n in 1usize..7, seed in any::<u64>(), tau in 0.05f64..2.0, shift in -1.0f64..1.0) {
        let mut r = rng::seeded(seed);
        let sim: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        let got = semantic_reward_from_similarity(&sim, tau).unwrap();
        let want = direct_softmax(&sim, tau);
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() < 1e-12);
            prop_assert!(*g > 0.0 && *g <= 1.0);
            if n > 1 { prop_assert!(*g < 1.0); }
        }
        // shifting one row leaves its reward unchanged
        let mut shifted = sim.clone();
        shifted[0].iter_mut().for_each(|s| *s += shift);
        let g2 = semantic_reward_from_similarity(&shifted, tau).unwrap();
        prop_assert!((g2[0] - got[0]).abs() < 1e-12);
        // raising the own similarity raises the reward
        if n > 1 {
            let mut up = sim.clone();
            up[0][0] += 0.05;
            prop_assert!(semantic_reward_from_similarity(&up, tau).unwrap()[0] > got[0]);
        }
    }
}

fn track(joint: Joint, heights: Vec<f64>, vel: Vec<[f64; 2]>) -> FootTrack {
    let n = heights.len();
    FootTrack {
        joint,
        horizontal: vec![[0.0; 2]; n],
        velocity: vel,
        height: heights,
        contact: vec![false; n],
    }
}

fn feet(heights: [Vec<f64>; 4], vel: [Vec<[f64; 2]>; 4]) -> FootState {
    let [h0, h1, h2, h3] = heights;
    let [v0, v1, v2, v3] = vel;
    FootState {
        fps: 20,
        tracks: [
            track(Joint::FEET[0], h0, v0),
            track(Joint::FEET[1], h1, v1),
            track(Joint::FEET[2], h2, v2),
            track(Joint::FEET[3], h3, v3),
        ],
    }
}

#[test]
fn physical_reward_examples() {
    // one contact frame, one foot sliding at 0.1 m/s
    let fs = feet(
        [vec![0.0], vec![0.2], vec![0.2], vec![0.2]],
        [vec![[0.06, 0.08]], vec![[1.0, 0.0]], vec![[0.0; 2]], vec![[0.0; 2]]],
    );
    assert!((physical_reward_from_feet(&fs, 0.05) - -0.01).abs() < 1e-15);

    let still = Motion::new(0, 20, ActionList::empty(), vec![[0.0; FRAME_DIM]; 10]).unwrap();
    assert_eq!(physical_reward(&still, 0.05).unwrap(), 0.0);

    let airborne: Vec<[f64; FRAME_DIM]> = (0..10)
        .map(|t| {
            let mut f = [0.0; FRAME_DIM];
            for j in 0..NUM_JOINTS {
                f[3 * j] = 0.3 * t as f64;
                f[3 * j + 1] = 0.5;
            }
            f
        })
        .collect();
    let m = Motion::new(0, 20, ActionList::empty(), airborne).unwrap();
    assert_eq!(physical_reward(&m, 0.05).unwrap(), 0.0);
    let one = Motion::new(0, 20, ActionList::empty(), vec![[0.0; FRAME_DIM]; 1]).and_then(|m| physical_reward(&m, 0.05));
    assert!(matches!(one, Err(motiongen::Error::TooShort { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn physical_reward_matches_direct_sum(seed in any::<u64>(), n in 1usize..30) {
        let mut r = rng::seeded(seed);
        let mut hs: [Vec<f64>; 4] = Default::default();
        let mut vs: [Vec<[f64; 2]>; 4] = Default::default();
        for i in 0..4 {
            hs[i] = (0..n).map(|_| r.random_range(-0.02..0.12)).collect();
            vs[i] = (0..n).map(|_| [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]).collect();
        }
        let mut want = 0.0;
        let mut any_slide = false;
        for t in 0..n {
            for i in 0..4 {
                if hs[i][t] <= 0.05 {
                    let s = vs[i][t][0].powi(2) + vs[i][t][1].powi(2);
                    want += s;
                    any_slide |= s > 0.0;
                }
            }
        }
        want = -want / n as f64;
        let got = physical_reward_from_feet(&feet(hs, vs), 0.05);
        prop_assert!((got - want).abs() < 1e-12);
        prop_assert!(got <= 0.0);
        prop_assert_eq!(got == 0.0, !any_slide);
    }
}

#[test]
fn total_reward_mixing() {
    let mut cfg = RewardConfig::default();
    assert!((total_reward(0.7, -0.01, &cfg) - 0.69).abs() < 1e-15);
    cfg.lambda_phy = 0.0;
    cfg.lambda_sem = 2.0;
    assert_eq!(total_reward(0.7, -5.0, &cfg), 1.4);
    let base = RewardConfig::default();
    let k = RewardConfig {
        lambda_sem: 3.0,
        lambda_phy: 3.0,
        ..base.clone()
    };
    assert!((total_reward(0.4, -0.2, &k) - 3.0 * total_reward(0.4, -0.2, &base)).abs() < 1e-15);
}

#[test]
fn reward_config_validation() {
    let bad = RewardConfig {
        clip_eps: 1.5,
        group_size: 1,
        lambda_sem: 0.0,
        lambda_phy: 0.0,
        ..Default::default()
    };
    let v = bad.violations();
    assert_eq!(v.len(), 3, "{v:?}");
    assert!(v.iter().any(|s| s.contains("clip_eps")));
    assert!(RewardConfig::default().violations().is_empty());
}

#[test]
fn advantage_examples() {
    assert_eq!(grpo_advantages(&[0.3; 5], 1e-6), vec![0.0; 5]);
    let a = grpo_advantages(&[1.0, 2.0, 3.0], 1e-6);
    let s = 1.5f64.sqrt();
    assert!((a[0] + s).abs() < 1e-12 && a[1].abs() < 1e-12 && (a[2] - s).abs() < 1e-12);
    let p = grpo_advantages(&[3.0, 1.0, 2.0], 1e-6);
    assert!((p[0] - a[2]).abs() < 1e-12 && (p[1] - a[0]).abs() < 1e-12);
}

proptest! {
    #[test]
    fn advantages_are_centered(rewards in prop::collection::vec(-5.0f64..5.0, 2..12)) {
        let a = grpo_advantages(&rewards, 1e-6);
        prop_assert!(a.iter().sum::<f64>().abs() < 1e-9);
        let mut rev = rewards.clone();
        rev.reverse();
        let b = grpo_advantages(&rev, 1e-6);
        for i in 0..a.len() {
            prop_assert!((a[i] - b[a.len() - 1 - i]).abs() < 1e-9);
        }
    }
}

#[test]
fn clip_is_symmetric() {
    let eps = 0.2;
    for ratio in [0.5, 0.8, 1.0, 1.1, 1.2, 1.5, 3.0] {
        let (pos, _, _) = clipped_term(ratio, 2.0, eps);
        assert!(pos <= 1.2 * 2.0 + 1e-15);
        assert_eq!(pos, (ratio * 2.0).min(ratio.clamp(0.8, 1.2) * 2.0));
        let (neg, _, _) = clipped_term(ratio, -2.0, eps);
        assert!(neg <= 0.8 * -2.0 + 1e-15);
        assert_eq!(neg, (ratio * -2.0).min(ratio.clamp(0.8, 1.2) * -2.0));
    }
    // clipped branch carries no gradient
    assert_eq!(clipped_term(1.5, 1.0, eps), (1.2, 0.0, true));
    assert_eq!(clipped_term(0.5, -1.0, eps), (-0.8, 0.0, true));
    assert_eq!(clipped_term(0.5, 1.0, eps), (0.5, 0.5, false));
}

fn toy_policy(seed: u64) -> PolicyModel {
    let cfg = PolicyConfig {
        d_model: 8,
        heads: 2,
        layers: 1,
        ffn: 16,
        context: 32,
        init_std: 0.5,
    };
    PolicyModel::new(cfg, Vocab::new(3, 2, 3).unwrap(), seed).unwrap()
}

fn toy_groups(pm: &PolicyModel, rewards: &[&[f64]], seed: u64) -> Vec<RolloutGroup> {
    let v = pm.vocab;
    let mut r = rng::seeded(seed);
    rewards
        .iter()
        .enumerate()
        .map(|(gi, rs)| {
            let mut g = RolloutGroup {
                prompt_index: gi,
                rollouts: rs
                    .iter()
                    .map(|&rew| {
                        let frames = r.random_range(1..4);
                        let mut ids = vec![0, 1, 2, v.motion_open()];
                        for _ in 0..frames {
                            for l in 1..=2 {
                                ids.push(v.motion_id(l, r.random_range(0..3)).unwrap());
                            }
                        }
                        ids.push(v.motion_close());
                        Rollout {
                            seq: TokenSequence { ids, prompt_len: 3 },
                            truncated: false,
                            motion: None,
                            sem: rew,
                            phy: 0.0,
                            reward: rew,
                            advantage: 0.0,
                        }
                    })
                    .collect(),
            };
            g.assign_advantages(1e-6);
            g
        })
        .collect()
}

#[test]
fn on_policy_step_has_unit_ratios_and_zero_kl() {
    let pm = toy_policy(1);
    let old = pm.snapshot();
    let groups = toy_groups(&pm, &[&[0.1, 0.5, 0.9], &[1.0, -1.0]], 2);
    let cfg = RewardConfig::default();
    let (obj, _) = grpo_objective(&pm, &old, &groups, &cfg, false).unwrap();
    let ratios = token_ratios(&pm, &old, &groups).unwrap();
    assert!(!ratios.is_empty() && ratios.iter().all(|&r| r == 1.0));
    assert!((obj.mean_ratio - 1.0).abs() < 1e-12);
    assert_eq!(obj.kl, 0.0);
    assert_eq!(obj.clip_fraction, 0.0);
    // surrogate is the token-weighted mean advantage
    let v = pm.vocab;
    let mut num = 0.0;
    let mut den = 0usize;
    for r in groups.iter().flat_map(|g| &g.rollouts) {
        let k = r.scored_positions(&v).len();
        num += r.advantage * k as f64;
        den += k;
    }
    assert_eq!(obj.tokens, den);
    assert!((obj.surrogate - num / den as f64).abs() < 1e-12);
    assert!((obj.loss + obj.surrogate).abs() < 1e-15);
}

#[test]
fn equal_rewards_give_zero_gradient() {
    let mut pm = toy_policy(3);
    let old = pm.snapshot();
    // move away from the snapshot so ratios differ from one
    let mut r = rng::seeded(4);
    pm.params.iter_mut().for_each(|p| *p += r.random_range(-0.05..0.05));
    let groups = toy_groups(&pm, &[&[0.4; 4], &[-0.2; 3]], 5);
    let cfg = RewardConfig {
        kl_beta: 0.0,
        ..Default::default()
    };
    let (_, g) = grpo_objective(&pm, &old, &groups, &cfg, true).unwrap();
    assert!(g.unwrap().iter().all(|&x| x == 0.0));
}

#[test]
fn objective_matches_closed_form() {
    let mut pm = toy_policy(6);
    let old = pm.snapshot();
    let mut r = rng::seeded(7);
    pm.params.iter_mut().for_each(|p| *p += r.random_range(-0.4..0.4));
    let groups = toy_groups(&pm, &[&[0.0, 1.0]], 8);
    let cfg = RewardConfig {
        clip_eps: 0.1,
        kl_beta: 0.3,
        ..Default::default()
    };
    let v = pm.vocab;
    let (obj, _) = grpo_objective(&pm, &old, &groups, &cfg, false).unwrap();
    let (mut s, mut kl, mut n, mut clipped) = (0.0, 0.0, 0.0, 0.0);
    for ro in &groups[0].rollouts {
        let lp = pm.forward(&ro.seq.ids).unwrap();
        let lo = old.forward(&ro.seq.ids).unwrap();
        for k in ro.scored_positions(&v) {
            let y = ro.seq.ids[k] as usize;
            let ratio = (lp[[k - 1, y]] - lo[[k - 1, y]]).exp();
            let a = ro.advantage;
            let un = ratio * a;
            let cl = ratio.clamp(0.9, 1.1) * a;
            s += un.min(cl);
            if cl < un {
                clipped += 1.0;
            }
            kl += (0..v.size())
                .map(|c| lo[[k - 1, c]].exp() * (lo[[k - 1, c]] - lp[[k - 1, c]]))
                .sum::<f64>();
            n += 1.0;
        }
    }
    assert!(clipped > 0.0, "fixture should exercise the clip");
    assert!((obj.surrogate - s / n).abs() < 1e-12);
    assert!((obj.kl - kl / n).abs() < 1e-12);
    assert!((obj.loss - (-s / n + 0.3 * kl / n)).abs() < 1e-12);
    assert!((obj.clip_fraction - clipped / n).abs() < 1e-12);
}

#[test]
fn objective_gradient_matches_finite_difference() {
    let mut pm = toy_policy(9);
    let old = pm.snapshot();
    let mut r = rng::seeded(10);
    pm.params.iter_mut().for_each(|p| *p += r.random_range(-0.05..0.05));
    let groups = toy_groups(&pm, &[&[0.0, 1.0, 0.3], &[2.0, -1.0]], 11);
    let cfg = RewardConfig {
        clip_eps: 0.5,
        kl_beta: 0.2,
        ..Default::default()
    };
    let (_, g) = grpo_objective(&pm, &old, &groups, &cfg, true).unwrap();
    let g = g.unwrap();
    let h = 1e-6;
    for _ in 0..50 {
        let i = r.random_range(0..pm.num_params());
        let x0 = pm.params[i];
        pm.params[i] = x0 + h;
        let up = grpo_objective(&pm, &old, &groups, &cfg, false).unwrap().0.loss;
        pm.params[i] = x0 - h;
        let dn = grpo_objective(&pm, &old, &groups, &cfg, false).unwrap().0.loss;
        pm.params[i] = x0;
        let fd = (up - dn) / (2.0 * h);
        let scale = g[i].abs().max(fd.abs());
        assert!((g[i] - fd).abs() <= 1e-4 * scale.max(1e-6), "param {i}: {} vs {fd}", g[i]);
    }
}

#[test]
fn mismatched_snapshot_is_rejected() {
    let pm = toy_policy(1);
    let other = PolicyModel::new(pm.config.clone(), Vocab::new(4, 2, 3).unwrap(), 1).unwrap();
    assert!(matches!(
        grpo_objective(&pm, &other, &[], &RewardConfig::default(), false),
        Err(motiongen::Error::Config(_))
    ));
}

#[test]
fn sampled_kl_estimate_is_nonnegative() {
    let pm = toy_policy(12);
    let mut theta = pm.snapshot();
    let mut r = rng::seeded(13);
    theta.params.iter_mut().for_each(|p| *p += r.random_range(-0.3..0.3));
    let ids = [0u32, 1, 2, 0, 1];
    let lo = pm.forward(&ids).unwrap();
    let lt = theta.forward(&ids).unwrap();
    let v = pm.vocab.size();
    let n = 10_000;
    let mut xs = Vec::with_capacity(n);
    let mut exact = 0.0;
    for k in 0..n {
        let row = k % ids.len();
        let probs: Vec<f64> = (0..v).map(|c| lo[[row, c]].exp()).collect();
        let mut u = r.random::<f64>();
        let mut x = v - 1;
        for (c, p) in probs.iter().enumerate() {
            if u < *p {
                x = c;
                break;
            }
            u -= p;
        }
        xs.push(lo[[row, x]] - lt[[row, x]]);
        exact += (0..v).map(|c| probs[c] * (lo[[row, c]] - lt[[row, c]])).sum::<f64>() / n as f64;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() / (n as f64).sqrt();
    assert!(exact >= 0.0);
    assert!(mean >= -3.0 * sd, "mean {mean} sd {sd}");
    assert!((mean - exact).abs() <= 3.0 * sd, "mean {mean} exact {exact} sd {sd}");
}
