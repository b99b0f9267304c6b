use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rvq::TokenStack;

pub const UNK: &str = "<unk>";

/// Word-level text vocabulary. Id 0 is `<unk>`; the rest are sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextVocab {
    words: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

/// Lowercases and splits on whitespace, separating punctuation.
pub fn split_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for raw in text.split_whitespace() {
        let mut cur = String::new();
        for ch in raw.chars().flat_map(char::to_lowercase) {
            if ch.is_alphanumeric() || ch == '_' || ch == '\'' || ch == '-' {
                cur.push(ch);
            } else {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(ch.to_string());
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

impl TextVocab {
    pub fn from_words<I: IntoIterator<Item = String>>(words: I) -> Self {
        let mut w: Vec<String> = words.into_iter().filter(|w| w != UNK).collect();
        w.sort();
        w.dedup();
        w.insert(0, UNK.to_string());
        Self::from_list(w)
    }

    fn from_list(words: Vec<String>) -> Self {
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();
        Self { words, index }
    }

    /// Vocabulary over the template grammar plus every word in `texts`.
    pub fn build<'a, I: IntoIterator<Item = &'a str>>(texts: I) -> Self {
        let mut words = crate::graph::text::template_words();
        for t in texts {
            words.extend(split_words(t));
        }
        Self::from_words(words)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> u32 {
        self.index.get(word).copied().unwrap_or(0)
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        self.words.get(id as usize).map(String::as_str)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        split_words(text).iter().map(|w| self.id(w)).collect()
    }

    pub fn decode(&self, ids: &[u32]) -> String {
        ids.iter().map(|&i| self.word(i).unwrap_or(UNK)).collect::<Vec<_>>().join(" ")
    }

    /// Restores the lookup table after deserialization.
    pub fn reindex(self) -> Self {
        Self::from_list(self.words)
    }
}

/// Unified id layout: text, then `levels x codebook_size` motion codes,
/// then `<Motion>`, `</Motion>`, `<PAD>`, `<EOS>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    pub n_text: usize,
    pub levels: usize,
    pub codebook_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Token {
    Text(u32),
    /// 1-based level.
    Motion {
        level: usize,
        code: u32,
    },
    MotionOpen,
    MotionClose,
    Pad,
    Eos,
}

impl Vocab {
    pub fn new(n_text: usize, levels: usize, codebook_size: usize) -> Result<Self> {
        if n_text == 0 || levels == 0 || codebook_size == 0 {
            return Err(Error::InvalidSpec("vocabulary sizes must be positive".into()));
        }
        Ok(Self {
            n_text,
            levels,
            codebook_size,
        })
    }

    pub fn size(&self) -> usize {
        self.n_text + self.levels * self.codebook_size + 4
    }

    fn special_base(&self) -> u32 {
        (self.n_text + self.levels * self.codebook_size) as u32
    }

    pub fn motion_open(&self) -> u32 {
        self.special_base()
    }

    pub fn motion_close(&self) -> u32 {
        self.special_base() + 1
    }

    pub fn pad(&self) -> u32 {
        self.special_base() + 2
    }

    pub fn eos(&self) -> u32 {
        self.special_base() + 3
    }

    pub fn motion_id(&self, level: usize, code: u32) -> Result<u32> {
        if level == 0 || level > self.levels || code as usize >= self.codebook_size {
            return Err(Error::CorruptTokens(format!("level {level} code {code} out of range")));
        }
        Ok((self.n_text + (level - 1) * self.codebook_size) as u32 + code)
    }

    /// Range of ids for one level's codes.
    pub fn level_range(&self, level: usize) -> std::ops::Range<u32> {
        let start = (self.n_text + (level - 1) * self.codebook_size) as u32;
        start..start + self.codebook_size as u32
    }

    pub fn encode(&self, t: Token) -> Result<u32> {
        match t {
            Token::Text(i) if (i as usize) < self.n_text => Ok(i),
            Token::Text(i) => Err(Error::CorruptTokens(format!("text id {i} out of range"))),
            Token::Motion { level, code } => self.motion_id(level, code),
            Token::MotionOpen => Ok(self.motion_open()),
            Token::MotionClose => Ok(self.motion_close()),
            Token::Pad => Ok(self.pad()),
            Token::Eos => Ok(self.eos()),
        }
    }

    pub fn decode(&self, id: u32) -> Result<Token> {
        let i = id as usize;
        let motion_end = self.n_text + self.levels * self.codebook_size;
        if i < self.n_text {
            Ok(Token::Text(id))
        } else if i < motion_end {
            let k = i - self.n_text;
            Ok(Token::Motion {
                level: k / self.codebook_size + 1,
                code: (k % self.codebook_size) as u32,
            })
        } else {
            match i - motion_end {
                0 => Ok(Token::MotionOpen),
                1 => Ok(Token::MotionClose),
                2 => Ok(Token::Pad),
                3 => Ok(Token::Eos),
                _ => Err(Error::CorruptTokens(format!("id {id} beyond vocabulary"))),
            }
        }
    }

    pub fn is_motion_code(&self, id: u32) -> bool {
        let i = id as usize;
        i >= self.n_text && i < self.n_text + self.levels * self.codebook_size
    }
}

/// `<Motion>`, then per frame the present level tokens in order, then
/// `</Motion>`.
pub fn flatten_tokens(ts: &TokenStack, v: &Vocab) -> Result<Vec<u32>> {
    let mut out = Vec::with_capacity(2 + ts.len() * v.levels);
    out.push(v.motion_open());
    for frame in &ts.indices {
        for (l, code) in frame.iter().enumerate() {
            if let Some(c) = code {
                out.push(v.motion_id(l + 1, *c)?);
            }
        }
    }
    out.push(v.motion_close());
    Ok(out)
}

/// Inverse of [`flatten_tokens`] for complete stacks. Accepts the span with
/// or without its brackets; every frame must list all levels in order.
pub fn unflatten_tokens(ids: &[u32], v: &Vocab, source_id: u64, downsample: usize) -> Result<TokenStack> {
    let mut body = ids;
    if body.first() == Some(&v.motion_open()) {
        body = &body[1..];
    }
    if body.last() == Some(&v.motion_close()) {
        body = &body[..body.len() - 1];
    }
    if body.is_empty() || !body.len().is_multiple_of(v.levels) {
        return Err(Error::CorruptTokens(format!(
            "span of {} tokens is not a whole number of {}-level frames",
            body.len(),
            v.levels
        )));
    }
    let mut indices = Vec::with_capacity(body.len() / v.levels);
    for frame in body.chunks(v.levels) {
        let mut row = Vec::with_capacity(v.levels);
        for (l, &id) in frame.iter().enumerate() {
            match v.decode(id)? {
                Token::Motion { level, code } if level == l + 1 => row.push(Some(code)),
                other => return Err(Error::CorruptTokens(format!("expected level-{} code, found {other:?}", l + 1))),
            }
        }
        indices.push(row);
    }
    Ok(TokenStack {
        source_id,
        source_frames: indices.len() * downsample,
        levels: v.levels,
        indices,
    })
}
