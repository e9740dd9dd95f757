//! Frequency-ranked word vocabulary.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::text::vocab_tokens;
use crate::error::{invalid, Error, Result};
use crate::model::{BOS, EOS, PAD, SPECIAL_TOKENS, UNK};

pub const SPECIAL_NAMES: [&str; SPECIAL_TOKENS] = ["<pad>", "</s>", "<s>", "<unk>"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    tokens: Vec<String>,
}

impl Vocab {
    /// Specials at ids 0..4, then the `size - 4` most frequent tokens ordered
    /// by descending count and then lexicographically.
    pub fn build<I, S>(corpus: I, size: usize) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        if size <= SPECIAL_TOKENS {
            return Err(invalid(format!("vocabulary size {size} leaves no room beyond the special tokens")));
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        let mut docs = 0;
        for text in corpus {
            docs += 1;
            for t in vocab_tokens(text.as_ref()) {
                *counts.entry(t).or_insert(0) += 1;
            }
        }
        if docs == 0 {
            return Err(invalid("corpus is empty"));
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().filter(|(t, _)| !SPECIAL_NAMES.contains(&t.as_str())).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let tokens = SPECIAL_NAMES
            .iter()
            .map(|s| s.to_string())
            .chain(ranked.into_iter().take(size - SPECIAL_TOKENS).map(|(t, _)| t))
            .collect();
        Self::from_tokens(tokens)
    }

    /// Rebuild from an id-ordered token list whose first entries are the specials.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < SPECIAL_TOKENS || tokens[..SPECIAL_TOKENS] != SPECIAL_NAMES {
            return Err(Error::Config("vocabulary does not start with the special tokens".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Config(format!("token {t:?} appears twice")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Unknown tokens map to the unk id. No end marker is appended.
    pub fn encode(&self, text: &str) -> Vec<usize> {
        vocab_tokens(text).iter().map(|t| self.id(t).unwrap_or(UNK)).collect()
    }

    /// Tokens joined by single spaces; pad, bos and eos are dropped and out of
    /// range ids render as the unk token.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter(|&&id| !matches!(id, PAD | BOS | EOS))
            .map(|&id| self.token(id).unwrap_or(SPECIAL_NAMES[UNK]))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&VocabFile { tokens: self.tokens.clone() })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_tokens(serde_json::from_str::<VocabFile>(s)?.tokens)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
