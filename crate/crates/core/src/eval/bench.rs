//! Reference-driven benchmark cases built from the synthetic corpus.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::text::REFERENCE_PHRASES;
use crate::graph::Span;
use crate::motion::{ActionItem, Motion};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchTask {
    Style,
    Trajectory,
    Speed,
}

impl BenchTask {
    pub const ALL: [BenchTask; 3] = [BenchTask::Style, BenchTask::Trajectory, BenchTask::Speed];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Style => "style",
            Self::Trajectory => "trajectory",
            Self::Speed => "speed",
        }
    }

    pub fn phrase(self) -> &'static str {
        REFERENCE_PHRASES[self as usize]
    }

    /// Whether `a` and `b` agree on the attribute this task transfers.
    fn shares(self, a: &ActionItem, b: &ActionItem) -> bool {
        match self {
            Self::Style => a.style == b.style,
            Self::Trajectory => a.trajectory == b.trajectory,
            Self::Speed => a.duration_class == b.duration_class,
        }
    }
}

impl fmt::Display for BenchTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BenchTask {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::InvalidSpec(format!("unknown bench task {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchCase {
    pub source: u64,
    pub reference: u64,
    pub text: String,
    pub task: BenchTask,
    pub target: u64,
}

impl BenchCase {
    /// Prompt spans: source motion, the reference phrase, reference motion.
    pub fn prompt(&self) -> Vec<Span> {
        vec![
            Span::Motion(self.source),
            Span::Text(self.text.clone()),
            Span::Motion(self.reference),
        ]
    }
}

/// Task named by a reference phrase; the text must name exactly one of
/// style, trajectory or speed.
pub fn categorize_case(text: &str) -> Result<BenchTask> {
    let words: Vec<&str> = text.split_whitespace().collect();
    let named: Vec<BenchTask> = BenchTask::ALL.into_iter().filter(|t| words.contains(&t.as_str())).collect();
    match named.as_slice() {
        [t] => Ok(*t),
        _ => Err(Error::AmbiguousCase(text.to_string())),
    }
}

fn single(m: &Motion) -> Option<&ActionItem> {
    match m.attrs.items() {
        [it] => Some(it),
        _ => None,
    }
}

/// Cases where the target differs from a single-item source in exactly the
/// task's attribute. The reference is a seeded pick among other single-item
/// motions of a different action that share the target's value of that
/// attribute.
pub fn build_cases(corpus: &[Motion], seed: u64) -> Result<Vec<BenchCase>> {
    let mut out = Vec::new();
    for (si, s) in corpus.iter().enumerate() {
        let Some(sa) = single(s) else { continue };
        for t in &corpus[si + 1..] {
            let Some(ta) = single(t) else { continue };
            if sa.field_distance(ta) != 1 || sa.action_type != ta.action_type || sa.body_part != ta.body_part {
                continue;
            }
            let Some(task) = BenchTask::ALL.into_iter().find(|k| !k.shares(sa, ta)) else {
                continue;
            };
            let refs: Vec<&Motion> = corpus
                .iter()
                .filter(|r| r.id != s.id && r.id != t.id)
                .filter(|r| single(r).is_some_and(|ra| ra.action_type != ta.action_type && task.shares(ra, ta)))
                .collect();
            if refs.is_empty() {
                continue;
            }
            let mut r = rng::seeded(rng::derive_indexed(seed, "bench", (s.id << 20) ^ t.id));
            let reference = refs[r.random_range(0..refs.len())];
            out.push(BenchCase {
                source: s.id,
                reference: reference.id,
                text: task.phrase().to_string(),
                task,
                target: t.id,
            });
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(out)
}

pub fn write_cases(path: &Path, cases: &[BenchCase]) -> Result<()> {
    let mut s = String::new();
    for c in cases {
        s.push_str(&serde_json::to_string(c)?);
        s.push('\n');
    }
    std::fs::write(path, s)?;
    Ok(())
}

pub fn read_cases(path: &Path) -> Result<Vec<BenchCase>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let c: BenchCase = serde_json::from_str(line)?;
        if categorize_case(&c.text)? != c.task {
            return Err(Error::Format(format!("case text {:?} does not name task {}", c.text, c.task)));
        }
        out.push(c);
    }
    Ok(out)
}
