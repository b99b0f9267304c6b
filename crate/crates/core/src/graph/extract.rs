use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::text;
use super::{Instruction, InstructionMeta, MotionGraph, Span, Task};
use crate::error::Result;
use crate::motion::{ActionItem, ActionList};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractConfig {
    pub tasks: Vec<Task>,
    /// Cap on in-context instructions per graph.
    pub max_samples: usize,
    pub max_sources: usize,
    pub max_turns: usize,
    /// Cap on sampled multi-turn paths per graph.
    pub max_paths: usize,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            tasks: Task::ALL.to_vec(),
            max_samples: 200,
            max_sources: 3,
            max_turns: 3,
            max_paths: 100,
        }
    }
}

impl ExtractConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.max_sources < 2 {
            v.push("instructions.max_sources must be >= 2".into());
        }
        if self.max_turns < 2 {
            v.push("instructions.max_turns must be >= 2".into());
        }
        v
    }
}

/// (opening, connector, closing, preposition) of the in-context templates.
const IN_CONTEXT_TEMPLATES: [(&str, &str, &str, &str); 3] = [
    ("concatenate", "with", ".", "in"),
    ("first perform", ", then", ".", "from"),
    ("combine", "and", "into one motion .", "of"),
];

pub(crate) const TEMPLATE_TEXTS: [&str; 3] = [
    "concatenate with . in",
    "first perform , then . from",
    "combine and into one motion . of",
];

fn covers(target: &ActionList, sources: &[&ActionList]) -> bool {
    target.items().iter().all(|it| sources.iter().any(|s| s.contains(it)))
}

/// Minimal covering source sets of `target` drawn from its predecessors.
fn covering_sets(g: &MotionGraph, target: u64, max_sources: usize) -> Vec<Vec<u64>> {
    let Ok(ak) = g.attrs(target) else { return Vec::new() };
    // only predecessors sharing an item with the target can contribute
    let preds: Vec<u64> = g
        .preds(target)
        .into_iter()
        .filter(|&p| g.attrs(p).is_ok_and(|a| a.items().iter().any(|it| ak.contains(it))))
        .collect();
    let mut out = Vec::new();
    let n = preds.len();
    let mut subset: Vec<usize> = Vec::new();
    fn rec(g: &MotionGraph, ak: &ActionList, preds: &[u64], start: usize, max: usize, subset: &mut Vec<usize>, out: &mut Vec<Vec<u64>>) {
        if subset.len() >= 2 {
            let lists: Vec<&ActionList> = subset.iter().map(|&i| g.attrs(preds[i]).expect("node")).collect();
            if covers(ak, &lists) {
                let minimal = (0..lists.len()).all(|skip| {
                    let rest: Vec<&ActionList> = lists.iter().enumerate().filter(|&(k, _)| k != skip).map(|(_, l)| *l).collect();
                    !covers(ak, &rest)
                });
                if minimal {
                    out.push(subset.iter().map(|&i| preds[i]).collect());
                }
                // supersets of a cover are never minimal
                return;
            }
        }
        if subset.len() == max {
            return;
        }
        for i in start..preds.len() {
            subset.push(i);
            rec(g, ak, preds, i + 1, max, subset, out);
            subset.pop();
        }
    }
    rec(g, ak, &preds, 0, max_sources.min(n), &mut subset, &mut out);
    out
}

fn item_phrase(it: &ActionItem) -> String {
    format!("the {}", text::describe_item(it))
}

fn render_in_context(g: &MotionGraph, target: u64, sources: &[u64], template: usize, seed: u64) -> Instruction {
    let ak = g.attrs(target).expect("target node");
    // each target item comes from the first source containing it
    let mut groups: Vec<(u64, Vec<ActionItem>)> = Vec::new();
    for it in ak.items() {
        let s = *sources
            .iter()
            .find(|&&s| g.attrs(s).expect("source node").contains(it))
            .expect("covering set");
        match groups.iter_mut().find(|(id, _)| *id == s) {
            Some((_, items)) => items.push(*it),
            None => groups.push((s, vec![*it])),
        }
    }
    let (open, conn, close, prep) = IN_CONTEXT_TEMPLATES[template];
    let mut turns = Vec::new();
    for (k, (s, items)) in groups.iter().enumerate() {
        let phrase: Vec<String> = items.iter().map(item_phrase).collect();
        let lead = if k == 0 { open } else { conn };
        turns.push(Span::Text(format!("{lead} {} {prep}", phrase.join(" and "))));
        turns.push(Span::Motion(*s));
    }
    turns.push(Span::Text(close.to_string()));
    Instruction {
        task: Task::InContext,
        turns,
        response: vec![Span::Motion(target)],
        target,
        meta: InstructionMeta {
            template: format!("in_context/{open}"),
            seed,
            sources: groups.iter().map(|(s, _)| *s).collect(),
            ..Default::default()
        },
    }
}

/// Composition instructions from converging edges whose sources cover the
/// target's action list.
pub fn extract_in_context(g: &MotionGraph, max_samples: usize, max_sources: usize, seed: u64) -> Vec<Instruction> {
    let mut cands: Vec<(u64, Vec<u64>)> = Vec::new();
    for n in &g.nodes {
        for s in covering_sets(g, n.id, max_sources) {
            cands.push((n.id, s));
        }
    }
    let mut r = rng::seeded(rng::derive_seed(seed, "in_context"));
    let keep: Vec<usize> = if cands.len() > max_samples {
        let mut idx = sample(&mut r, cands.len(), max_samples).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..cands.len()).collect()
    };
    keep.into_iter()
        .map(|i| {
            let (t, s) = &cands[i];
            let s_seed = rng::derive_indexed(seed, "in_context", i as u64);
            let template = (s_seed % IN_CONTEXT_TEMPLATES.len() as u64) as usize;
            render_in_context(g, *t, s, template, s_seed)
        })
        .collect()
}

fn edit_turn(g: &MotionGraph, from: u64, to: u64) -> Option<(String, Vec<ActionItem>)> {
    let (a, b) = (g.attrs(from).ok()?, g.attrs(to).ok()?);
    let clauses = text::render_edit(a, b);
    if clauses.is_empty() {
        return None;
    }
    let delta = clauses.iter().map(|c| c.element).collect();
    Some((text::edit_text(&clauses), delta))
}

/// One edit instruction per edge with a non-empty added set.
pub fn extract_editing(g: &MotionGraph) -> Vec<Instruction> {
    g.edges
        .iter()
        .filter_map(|e| {
            let (text, delta) = edit_turn(g, e.from, e.to)?;
            Some(Instruction {
                task: Task::Edit,
                turns: vec![Span::Motion(e.from), Span::Text(text)],
                response: vec![Span::Motion(e.to)],
                target: e.to,
                meta: InstructionMeta {
                    template: "edit".into(),
                    seed: 0,
                    delta,
                    sources: vec![e.from],
                    ..Default::default()
                },
            })
        })
        .collect()
}

/// Seeded random walks over edges with non-empty edits, 2..=max_turns
/// edges long, deduplicated.
pub fn extract_multiturn(g: &MotionGraph, max_turns: usize, max_paths: usize, seed: u64) -> Vec<Instruction> {
    let usable: Vec<(u64, u64)> = g
        .edges
        .iter()
        .filter(|e| edit_turn(g, e.from, e.to).is_some())
        .map(|e| (e.from, e.to))
        .collect();
    let out_of = |id: u64| -> Vec<u64> { usable.iter().filter(|e| e.0 == id).map(|e| e.1).collect() };
    // nodes that start at least one two-edge path
    let starts: Vec<u64> = g
        .nodes
        .iter()
        .map(|n| n.id)
        .filter(|&id| out_of(id).iter().any(|&m| !out_of(m).is_empty()))
        .collect();
    if starts.is_empty() || max_turns < 2 {
        return Vec::new();
    }
    let mut r = rng::seeded(rng::derive_seed(seed, "multi_turn"));
    let mut seen: BTreeSet<Vec<u64>> = BTreeSet::new();
    let mut paths = Vec::new();
    for _ in 0..max_paths.saturating_mul(10) {
        if paths.len() >= max_paths {
            break;
        }
        let want = r.random_range(2..=max_turns);
        let mut path = vec![starts[r.random_range(0..starts.len())]];
        while path.len() <= want {
            let next = out_of(*path.last().expect("non-empty"));
            if next.is_empty() {
                break;
            }
            path.push(next[r.random_range(0..next.len())]);
        }
        if path.len() >= 3 && seen.insert(path.clone()) {
            paths.push(path);
        }
    }
    paths
        .into_iter()
        .enumerate()
        .map(|(k, path)| {
            let mut turns = Vec::new();
            let mut delta = Vec::new();
            for w in path.windows(2) {
                let (t, d) = edit_turn(g, w[0], w[1]).expect("usable edge");
                turns.push(Span::Motion(w[0]));
                turns.push(Span::Text(t));
                delta.extend(d);
            }
            let target = *path.last().expect("non-empty");
            Instruction {
                task: Task::MultiTurn,
                turns,
                response: vec![Span::Motion(target)],
                target,
                meta: InstructionMeta {
                    template: format!("multi_turn/{}", path.len() - 1),
                    seed: rng::derive_indexed(seed, "multi_turn", k as u64),
                    delta,
                    sources: path[..path.len() - 1].to_vec(),
                    ..Default::default()
                },
            }
        })
        .collect()
}

/// A matched and a mismatched caption/motion pair per edge.
pub fn extract_reflection(g: &MotionGraph, seed: u64) -> Vec<Instruction> {
    let mut out = Vec::with_capacity(2 * g.edges.len());
    for (k, e) in g.edges.iter().enumerate() {
        let (a, b) = (g.attrs(e.from).expect("node"), g.attrs(e.to).expect("node"));
        let caption = text::caption(b);
        let s = rng::derive_indexed(seed, "reflection", k as u64);
        out.push(Instruction {
            task: Task::Reflection,
            turns: vec![
                Span::Text(caption.clone()),
                Span::Motion(e.to),
                Span::Text(text::JUDGE_QUESTION.into()),
            ],
            response: vec![Span::Text(text::VERDICT_YES.into())],
            target: e.to,
            meta: InstructionMeta {
                template: "reflection/positive".into(),
                seed: s,
                aligned: Some(true),
                ..Default::default()
            },
        });
        let missing = b.difference(a);
        let extra = a.difference(b);
        out.push(Instruction {
            task: Task::Reflection,
            turns: vec![Span::Text(caption), Span::Motion(e.from), Span::Text(text::JUDGE_QUESTION.into())],
            response: vec![
                Span::Text(format!("{} {}", text::verdict_no(&missing, &extra), text::REGENERATE)),
                Span::Motion(e.to),
            ],
            target: e.to,
            meta: InstructionMeta {
                template: "reflection/negative".into(),
                seed: s,
                aligned: Some(false),
                delta: missing,
                sources: vec![e.from],
            },
        });
    }
    out
}

/// Runs the extractors selected in `cfg`, in task order.
pub fn extract_all(g: &MotionGraph, cfg: &ExtractConfig, seed: u64) -> Result<Vec<Instruction>> {
    let mut out = Vec::new();
    for task in Task::ALL {
        if !cfg.tasks.contains(&task) {
            continue;
        }
        out.extend(match task {
            Task::InContext => extract_in_context(g, cfg.max_samples, cfg.max_sources, seed),
            Task::Edit => extract_editing(g),
            Task::MultiTurn => extract_multiturn(g, cfg.max_turns, cfg.max_paths, seed),
            Task::Reflection => extract_reflection(g, seed),
        });
    }
    for it in &out {
        it.validate()?;
    }
    Ok(out)
}
