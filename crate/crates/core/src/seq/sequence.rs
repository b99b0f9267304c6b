use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::vocab::{TextVocab, Token, Vocab};
use crate::error::{Error, Result};
use crate::graph::{Instruction, Span};

/// Token ids of a training or prompt sequence. Positions before
/// `prompt_len` belong to the prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub prompt_len: usize,
}

impl TokenSequence {
    pub fn new(ids: Vec<u32>) -> Self {
        let n = ids.len();
        Self { ids, prompt_len: n }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// `(open, close)` positions of each motion span; a trailing unclosed
    /// span reports `close == len`.
    pub fn spans(&self, v: &Vocab) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut open = None;
        for (i, &id) in self.ids.iter().enumerate() {
            if id == v.motion_open() && open.is_none() {
                open = Some(i);
            } else if id == v.motion_close() {
                if let Some(o) = open.take() {
                    out.push((o, i));
                }
            }
        }
        if let Some(o) = open {
            out.push((o, self.ids.len()));
        }
        out
    }

    /// Checks bracketing, span interiors and length.
    pub fn validate(&self, v: &Vocab, context: usize) -> Result<()> {
        if self.ids.len() > context {
            return Err(Error::ContextOverflow {
                len: self.ids.len(),
                context,
            });
        }
        let mut inside = false;
        for (i, &id) in self.ids.iter().enumerate() {
            match v.decode(id)? {
                Token::MotionOpen if !inside => inside = true,
                Token::MotionClose if inside => inside = false,
                Token::Motion { .. } if inside => {}
                Token::Text(_) | Token::Pad | Token::Eos if !inside => {}
                t => {
                    return Err(Error::CorruptTokens(format!("unexpected {t:?} at position {i}")));
                }
            }
        }
        if inside {
            return Err(Error::CorruptTokens("unclosed motion span".into()));
        }
        Ok(())
    }
}

/// Flattened motion spans by segment id.
pub type MotionTokens = HashMap<u64, Vec<u32>>;

fn spans_to_ids(spans: &[Span], tv: &TextVocab, motions: &MotionTokens, out: &mut Vec<u32>) -> Result<()> {
    for s in spans {
        match s {
            Span::Text(t) => out.extend(tv.encode(t)),
            Span::Motion(id) => out.extend(motions.get(id).ok_or(Error::UnknownSegment(*id))?),
        }
    }
    Ok(())
}

/// Prompt ids for a list of spans.
pub fn compile_prompt(turns: &[Span], tv: &TextVocab, motions: &MotionTokens) -> Result<Vec<u32>> {
    let mut ids = Vec::new();
    spans_to_ids(turns, tv, motions, &mut ids)?;
    Ok(ids)
}

/// Training sequence `turns ++ response ++ <EOS>`.
pub fn compile_instruction(ins: &Instruction, tv: &TextVocab, v: &Vocab, motions: &MotionTokens) -> Result<TokenSequence> {
    let mut ids = compile_prompt(&ins.turns, tv, motions)?;
    let prompt_len = ids.len();
    spans_to_ids(&ins.response, tv, motions, &mut ids)?;
    ids.push(v.eos());
    Ok(TokenSequence { ids, prompt_len })
}
