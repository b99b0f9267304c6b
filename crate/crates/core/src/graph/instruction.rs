use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::ActionItem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    InContext,
    Edit,
    MultiTurn,
    Reflection,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::InContext, Task::Edit, Task::MultiTurn, Task::Reflection];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::InContext => "in_context",
            Task::Edit => "edit",
            Task::MultiTurn => "multi_turn",
            Task::Reflection => "reflection",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.as_str() == s.trim())
            .ok_or_else(|| Error::InvalidSpec(format!("unknown task `{s}`")))
    }
}

/// A piece of an interleaved prompt or response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Span {
    Text(String),
    Motion(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct InstructionMeta {
    pub template: String,
    pub seed: u64,
    /// Reflection samples: whether the shown motion matches the caption.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aligned: Option<bool>,
    /// Elements added relative to the source, for edit-style tasks.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub delta: Vec<ActionItem>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sources: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instruction {
    pub task: Task,
    pub turns: Vec<Span>,
    pub response: Vec<Span>,
    pub target: u64,
    pub meta: InstructionMeta,
}

impl Instruction {
    /// Ids of every motion referenced by turns or response.
    pub fn motion_refs(&self) -> Vec<u64> {
        self.turns
            .iter()
            .chain(&self.response)
            .filter_map(|s| match s {
                Span::Motion(id) => Some(*id),
                Span::Text(_) => None,
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.turns.iter().chain(&self.response).any(|s| matches!(s, Span::Text(_))) {
            return Err(Error::InvalidSpec("instruction has no text span".into()));
        }
        if self.task == Task::MultiTurn {
            let edits = self.turns.iter().filter(|s| matches!(s, Span::Text(_))).count();
            if edits < 2 {
                return Err(Error::InvalidSpec("multi-turn instruction needs >= 2 edit turns".into()));
            }
        }
        if self.task == Task::Reflection && self.meta.aligned.is_none() {
            return Err(Error::InvalidSpec("reflection sample without alignment label".into()));
        }
        Ok(())
    }
}

pub fn write_instructions(path: &Path, items: &[Instruction]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_instructions(path: &Path) -> Result<Vec<Instruction>> {
    let r = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let it: Instruction = serde_json::from_str(&line)?;
        it.validate()?;
        out.push(it);
    }
    Ok(out)
}
