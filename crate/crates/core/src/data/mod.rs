//! Gap-sentence pre-training data: sentence splitting, ROUGE, selection and
//! a word-level vocabulary.

mod gsg;
pub mod jsonl;
mod rouge;
mod text;
mod vocab;

pub use gsg::{brute_force_selection, gsg_corpus, gsg_select, selection_count, sentence_scores, PseudoPair, DEFAULT_ALPHA};
pub use rouge::{lcs_len, rouge_l, rouge_n, rouge_n_tokens};
pub use text::{rouge_tokens, split_sentences, vocab_tokens, Document};
pub use vocab::{Vocab, SPECIAL_NAMES};
