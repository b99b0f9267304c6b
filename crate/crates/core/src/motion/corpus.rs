//! Seeded procedural corpora organized in families of related motions.
//!
//! Each family starts from a random base item and adds variants that
//! differ in one field (style, trajectory, duration class), a composition
//! of the base with one of its variants, and an appended action. Related
//! motions get nearby ids so the motion graph finds edges between them.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{
    synthesize_motion, ActionItem, ActionList, ActionType, BodyPart, DurationClass, Motion, Style, Trajectory, MAX_SEGMENT_SECONDS,
};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub count: usize,
    pub fps: u32,
    pub min_duration: f64,
    pub max_duration: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            count: 200,
            fps: 20,
            min_duration: 2.0,
            max_duration: 4.0,
        }
    }
}

impl CorpusConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.count < 1 {
            v.push("corpus.count must be >= 1".into());
        }
        if self.fps < 1 {
            v.push("corpus.fps must be >= 1".into());
        }
        if !(self.min_duration > 0.0) {
            v.push("corpus.min_duration must be > 0".into());
        }
        if !(self.max_duration >= self.min_duration && self.max_duration <= MAX_SEGMENT_SECONDS) {
            v.push(format!("corpus.max_duration must lie in [min_duration, {MAX_SEGMENT_SECONDS}]"));
        }
        if self.fps >= 1 && self.min_duration * (self.fps as f64) < 8.0 {
            v.push("corpus.min_duration * fps must give at least 8 frames".into());
        }
        v
    }
}

fn pick<T: Copy>(r: &mut Rng, xs: &[T]) -> T {
    xs[r.random_range(0..xs.len())]
}

fn pick_other<T: Copy + PartialEq>(r: &mut Rng, xs: &[T], not: T) -> T {
    loop {
        let x = pick(r, xs);
        if x != not {
            return x;
        }
    }
}

fn random_item(r: &mut Rng) -> ActionItem {
    ActionItem::new(
        pick(r, ActionType::ALL),
        pick(r, BodyPart::ALL),
        pick(r, Style::ALL),
        pick(r, DurationClass::ALL),
        pick(r, Trajectory::ALL),
    )
}

/// Action lists of one family, in id order.
pub fn family_specs(r: &mut Rng) -> Vec<ActionList> {
    let base = random_item(r);
    let styled = ActionItem {
        style: pick_other(r, Style::ALL, base.style),
        ..base
    };
    let moved = ActionItem {
        trajectory: pick_other(r, Trajectory::ALL, base.trajectory),
        ..base
    };
    let paced = ActionItem {
        duration_class: pick_other(r, DurationClass::ALL, base.duration_class),
        ..base
    };
    let partner = pick(r, &[styled, moved, paced]);
    let appended = ActionItem {
        action_type: pick_other(r, ActionType::ALL, base.action_type),
        trajectory: pick(r, Trajectory::ALL),
        ..base
    };
    vec![
        ActionList::single(base),
        ActionList::single(styled),
        ActionList::single(moved),
        ActionList::single(paced),
        ActionList::new(vec![base, partner]),
        ActionList::new(vec![base, appended]),
    ]
}

/// Generates `cfg.count` motions with ids `0..count`.
pub fn generate_corpus(cfg: &CorpusConfig, seed: u64) -> Result<Vec<Motion>> {
    let v = cfg.violations();
    if !v.is_empty() {
        return Err(Error::Config(v));
    }
    let mut r = rng::seeded(seed);
    let mut out = Vec::with_capacity(cfg.count);
    while out.len() < cfg.count {
        for spec in family_specs(&mut r) {
            if out.len() == cfg.count {
                break;
            }
            let id = out.len() as u64;
            let dur = if cfg.max_duration > cfg.min_duration {
                r.random_range(cfg.min_duration..cfg.max_duration)
            } else {
                cfg.min_duration
            };
            let mut m = synthesize_motion(&spec, dur, cfg.fps, rng::derive_indexed(seed, "motion", id))?;
            m.id = id;
            out.push(m);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_is_deterministic_and_sized() {
        let cfg = CorpusConfig {
            count: 14,
            ..CorpusConfig::default()
        };
        let a = generate_corpus(&cfg, 5).unwrap();
        let b = generate_corpus(&cfg, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 14);
        assert!(a.iter().enumerate().all(|(i, m)| m.id == i as u64));
        assert!(a.iter().all(|m| m.duration() <= 4.0 + 1e-9 && m.duration() >= 2.0 - 1e-9));
        assert_ne!(a, generate_corpus(&cfg, 6).unwrap());
    }

    #[test]
    fn family_variants_differ_in_one_field() {
        let mut r = rng::seeded(2);
        for _ in 0..50 {
            let f = family_specs(&mut r);
            let base = f[0].items()[0];
            for v in &f[1..4] {
                assert_eq!(base.field_distance(&v.items()[0]), 1);
            }
            assert!(f[4].contains(&base) && f[4].len() == 2);
            assert_ne!(f[5].items()[1].action_type, base.action_type);
        }
    }

    #[test]
    fn bad_config_lists_every_violation() {
        let cfg = CorpusConfig {
            count: 0,
            fps: 0,
            min_duration: -1.0,
            max_duration: 20.0,
        };
        match generate_corpus(&cfg, 0) {
            Err(Error::Config(v)) => assert_eq!(v.len(), 4),
            other => panic!("{other:?}"),
        }
    }
}
