//! Sentence splitting and the two tokenizers.

use crate::error::{invalid, Result};

/// Ordered, nonempty list of nonempty sentences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub sentences: Vec<String>,
}

impl Document {
    pub fn new(sentences: Vec<String>) -> Result<Self> {
        if sentences.is_empty() {
            return Err(invalid("document has no sentences"));
        }
        if sentences.iter().any(|s| s.trim().is_empty()) {
            return Err(invalid("document contains an empty sentence"));
        }
        Ok(Self { sentences })
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

/// Split after `.`, `!` or `?` when followed by whitespace or the end of the
/// text. Abbreviations such as "Dr." therefore end a sentence.
pub fn split_sentences(text: &str) -> Result<Document> {
    if text.trim().is_empty() {
        return Err(invalid("text is empty"));
    }
    let mut sentences = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            let boundary = match chars.peek() {
                None => true,
                Some(&(_, next)) => next.is_whitespace(),
            };
            if boundary {
                let end = i + c.len_utf8();
                push_trimmed(&mut sentences, &text[start..end]);
                start = end;
            }
        }
    }
    push_trimmed(&mut sentences, &text[start..]);
    Document::new(sentences)
}

fn push_trimmed(out: &mut Vec<String>, s: &str) {
    let t = s.trim();
    if !t.is_empty() {
        out.push(t.to_string());
    }
}

/// Lowercased alphanumeric runs; everything else separates tokens.
pub fn rouge_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Whitespace-separated chunks further split into alphanumeric runs and
/// single punctuation characters. Case is preserved.
pub fn vocab_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut run = String::new();
        for c in chunk.chars() {
            if c.is_alphanumeric() {
                run.push(c);
            } else {
                if !run.is_empty() {
                    out.push(std::mem::take(&mut run));
                }
                out.push(c.to_string());
            }
        }
        if !run.is_empty() {
            out.push(run);
        }
    }
    out
}
