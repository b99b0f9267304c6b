//! Motion graph construction and instruction extraction.
//!
//! Segments become nodes; a directed edge `i -> j` joins segments whose
//! descriptor similarity exceeds a threshold, with `i < j` so the graph is
//! acyclic. Instructions are read off its structure: edges give edits,
//! paths give multi-turn dialogues, converging edges give in-context
//! composition, and edges with captions give reflection samples.

mod embed;
mod extract;
mod instruction;
pub mod text;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::{ActionList, Motion};

pub use embed::{cosine, embed_kinematic, embed_segment, raw_kinematic_features, Embedding, KINEMATIC_FEATURES};
pub use extract::{extract_all, extract_editing, extract_in_context, extract_multiturn, extract_reflection, ExtractConfig};
pub use instruction::{read_instructions, write_instructions, Instruction, InstructionMeta, Span, Task};

pub const DEFAULT_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: u64,
    pub attrs: ActionList,
    pub embedding: Embedding,
}

impl GraphNode {
    pub fn from_motion(m: &Motion) -> Self {
        Self {
            id: m.id,
            attrs: m.attrs.clone(),
            embedding: embed_segment(m),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: u64,
    pub to: u64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionGraph {
    pub threshold: f64,
    /// Sorted by id.
    pub nodes: Vec<GraphNode>,
    /// Sorted by `(from, to)`.
    pub edges: Vec<Edge>,
}

/// Connects every pair `i < j` with similarity above `threshold` whose
/// action lists differ.
pub fn build_graph(segments: &[GraphNode], threshold: f64) -> Result<MotionGraph> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::OutOfRange {
            what: "similarity threshold",
            detail: format!("{threshold} not in (0, 1)"),
        });
    }
    let mut nodes = segments.to_vec();
    nodes.sort_by_key(|n| n.id);
    if let Some(w) = nodes.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(Error::DuplicateId(w[0].id));
    }
    let mut edges = Vec::new();
    for (a, na) in nodes.iter().enumerate() {
        for nb in &nodes[a + 1..] {
            if na.attrs == nb.attrs {
                continue;
            }
            let w = na.embedding.cosine(&nb.embedding);
            if w > threshold {
                edges.push(Edge {
                    from: na.id,
                    to: nb.id,
                    weight: w,
                });
            }
        }
    }
    Ok(MotionGraph { threshold, nodes, edges })
}

pub fn build_graph_from_motions(corpus: &[Motion], threshold: f64) -> Result<MotionGraph> {
    let nodes: Vec<GraphNode> = corpus.iter().map(GraphNode::from_motion).collect();
    build_graph(&nodes, threshold)
}

impl MotionGraph {
    pub fn node(&self, id: u64) -> Option<&GraphNode> {
        self.nodes.binary_search_by_key(&id, |n| n.id).ok().map(|i| &self.nodes[i])
    }

    pub fn attrs(&self, id: u64) -> Result<&ActionList> {
        self.node(id).map(|n| &n.attrs).ok_or(Error::UnknownSegment(id))
    }

    /// Predecessors of `id`, ascending.
    pub fn preds(&self, id: u64) -> Vec<u64> {
        self.edges.iter().filter(|e| e.to == id).map(|e| e.from).collect()
    }

    /// Successors of `id`, ascending.
    pub fn succs(&self, id: u64) -> Vec<u64> {
        self.edges.iter().filter(|e| e.from == id).map(|e| e.to).collect()
    }

    pub fn has_edge(&self, from: u64, to: u64) -> bool {
        self.edges.binary_search_by(|e| (e.from, e.to).cmp(&(from, to))).is_ok()
    }

    /// Kahn's algorithm, smallest ready id first.
    pub fn topological_order(&self) -> Result<Vec<u64>> {
        let mut indeg: BTreeMap<u64, usize> = self.nodes.iter().map(|n| (n.id, 0)).collect();
        let mut out_adj: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
        for e in &self.edges {
            *indeg.get_mut(&e.to).ok_or(Error::UnknownSegment(e.to))? += 1;
            out_adj.entry(e.from).or_default().push(e.to);
        }
        let mut ready: BTreeSet<u64> = indeg.iter().filter(|(_, &d)| d == 0).map(|(&id, _)| id).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(id) = ready.pop_first() {
            order.push(id);
            for &t in out_adj.get(&id).map(Vec::as_slice).unwrap_or(&[]) {
                let d = indeg.get_mut(&t).expect("known node");
                *d -= 1;
                if *d == 0 {
                    ready.insert(t);
                }
            }
        }
        if order.len() != self.nodes.len() {
            return Err(Error::InvalidSpec("motion graph contains a cycle".into()));
        }
        Ok(order)
    }

    /// Re-checks the structural invariants.
    pub fn validate(&self) -> Result<()> {
        for e in &self.edges {
            let (a, b) = (self.attrs(e.from)?, self.attrs(e.to)?);
            if e.from >= e.to || a == b || !(e.weight > self.threshold) {
                return Err(Error::InvalidSpec(format!("edge {} -> {} violates graph invariants", e.from, e.to)));
            }
        }
        self.topological_order().map(|_| ())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let g: MotionGraph = serde_json::from_slice(&std::fs::read(path)?)?;
        g.validate()?;
        Ok(g)
    }
}
