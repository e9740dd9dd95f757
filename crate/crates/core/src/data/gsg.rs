//! Gap-sentence selection: pick the `⌊αM⌋` sentences with the highest
//! ROUGE-1 F1 against the rest of the document.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rouge::rouge_n_tokens;
use super::text::{rouge_tokens, Document};
use crate::error::{invalid, Error, Result};

pub const DEFAULT_ALPHA: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoPair {
    /// Unselected sentences joined by single spaces.
    pub source: String,
    /// Selected sentences in document order.
    pub summary: String,
    /// 1-based sentence indices, ascending.
    pub selected_indices: Vec<usize>,
}

/// `⌊alpha · M⌋`.
pub fn selection_count(sentences: usize, alpha: f64) -> usize {
    (alpha * sentences as f64).floor() as usize
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// ROUGE-1 F1 of each sentence against the concatenation of all others.
pub fn sentence_scores(doc: &Document) -> Vec<f64> {
    let tokens: Vec<Vec<String>> = doc.sentences.iter().map(|s| rouge_tokens(s)).collect();
    (0..tokens.len())
        .map(|j| {
            let rest: Vec<String> =
                tokens.iter().enumerate().filter(|&(i, _)| i != j).flat_map(|(_, t)| t.iter().cloned()).collect();
            rouge_n_tokens(&tokens[j], &rest, 1)
        })
        .collect()
}

/// Scores every sentence once and keeps the top `⌊αM⌋`, lower index first on
/// ties. Returns [`Error::TooShort`] when that count is zero.
pub fn gsg_select(doc: &Document, alpha: f64) -> Result<PseudoPair> {
    check_alpha(alpha)?;
    let m = doc.len();
    let k = selection_count(m, alpha);
    if k == 0 {
        return Err(Error::TooShort { sentences: m, alpha });
    }
    let scores = sentence_scores(doc);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut chosen = order[..k].to_vec();
    chosen.sort_unstable();
    Ok(assemble(doc, &chosen))
}

fn assemble(doc: &Document, chosen: &[usize]) -> PseudoPair {
    let mut picked = Vec::with_capacity(chosen.len());
    let mut rest = Vec::with_capacity(doc.len() - chosen.len());
    for (i, s) in doc.sentences.iter().enumerate() {
        if chosen.binary_search(&i).is_ok() {
            picked.push(s.as_str());
        } else {
            rest.push(s.as_str());
        }
    }
    PseudoPair {
        source: rest.join(" "),
        summary: picked.join(" "),
        selected_indices: chosen.iter().map(|i| i + 1).collect(),
    }
}

/// Selection over many documents in parallel, output in input order.
pub fn gsg_corpus(docs: &[Document], alpha: f64) -> Vec<Result<PseudoPair>> {
    docs.par_iter().map(|d| gsg_select(d, alpha)).collect()
}

/// Exhaustive reference for [`gsg_select`]: scores each sentence with a
/// sort-and-merge unigram count, then searches every `⌊αM⌋`-subset for the
/// one that dominates the rest (higher score, or equal score and lower index).
/// Returns 1-based indices. Intended for `M ≤ 16`.
pub fn brute_force_selection(doc: &Document, alpha: f64) -> Result<Vec<usize>> {
    check_alpha(alpha)?;
    let m = doc.len();
    if m > 16 {
        return Err(invalid("exhaustive selection is limited to 16 sentences"));
    }
    let k = selection_count(m, alpha);
    if k == 0 {
        return Err(Error::TooShort { sentences: m, alpha });
    }
    let tokens: Vec<Vec<String>> = doc.sentences.iter().map(|s| rouge_tokens(s)).collect();
    let scores: Vec<f64> = (0..m)
        .map(|j| {
            let mut cand = tokens[j].clone();
            let mut rest: Vec<String> = (0..m).filter(|&i| i != j).flat_map(|i| tokens[i].clone()).collect();
            cand.sort();
            rest.sort();
            let (mut a, mut b, mut overlap) = (0, 0, 0usize);
            while a < cand.len() && b < rest.len() {
                match cand[a].cmp(&rest[b]) {
                    std::cmp::Ordering::Less => a += 1,
                    std::cmp::Ordering::Greater => b += 1,
                    std::cmp::Ordering::Equal => {
                        overlap += 1;
                        a += 1;
                        b += 1;
                    }
                }
            }
            if overlap == 0 {
                return 0.0;
            }
            let p = overlap as f64 / cand.len() as f64;
            let r = overlap as f64 / rest.len() as f64;
            2.0 * p * r / (p + r)
        })
        .collect();
    let beats = |i: usize, j: usize| scores[i] > scores[j] || (scores[i] == scores[j] && i < j);
    let mut found = Vec::new();
    for mask in 0u32..(1 << m) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let inside = |i: usize| mask & (1 << i) != 0;
        let dominant = (0..m).filter(|&i| inside(i)).all(|i| (0..m).filter(|&j| !inside(j)).all(|j| beats(i, j)));
        if dominant {
            found.push((0..m).filter(|&i| inside(i)).map(|i| i + 1).collect::<Vec<_>>());
        }
    }
    match found.len() {
        1 => Ok(found.pop().expect("one subset")),
        n => Err(invalid(format!("{n} dominant subsets; ordering is not total"))),
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::data::split_sentences;

    fn doc(sentences: &[&str]) -> Document {
        Document::new(sentences.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn too_short_is_a_distinct_signal() {
        let d = doc(&["a.", "b.", "c.", "d."]);
        assert!(matches!(gsg_select(&d, 0.2), Err(Error::TooShort { sentences: 4, .. })));
        assert!(matches!(gsg_select(&d, 0.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(gsg_select(&d, 1.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn identical_sentences_pick_the_first() {
        let d = doc(&["same words here."; 5]);
        let p = gsg_select(&d, 0.2).unwrap();
        assert_eq!(p.selected_indices, vec![1]);
        assert_eq!(brute_force_selection(&d, 0.2).unwrap(), vec![1]);
    }

    #[test]
    fn central_sentence_is_selected() {
        let d = doc(&[
            "The river flooded.",
            "Farmers lost crops.",
            "The river flooded and farmers lost crops near the town.",
            "The town was quiet.",
            "Rain kept falling.",
        ]);
        let p = gsg_select(&d, 0.2).unwrap();
        assert_eq!(p.selected_indices, vec![3]);
        assert_eq!(brute_force_selection(&d, 0.2).unwrap(), vec![3]);
        assert_eq!(p.summary, "The river flooded and farmers lost crops near the town.");
        assert_eq!(p.source, "The river flooded. Farmers lost crops. The town was quiet. Rain kept falling.");
    }

    #[test]
    fn corpus_keeps_order() {
        let docs = vec![doc(&["a b."; 5]), doc(&["x."]), doc(&["c d.", "c.", "d.", "e.", "f."])];
        let out = gsg_corpus(&docs, 0.2);
        assert_eq!(out.len(), 3);
        assert_eq!(out[0].as_ref().unwrap().selected_indices, vec![1]);
        assert!(matches!(out[1], Err(Error::TooShort { .. })));
        assert_eq!(out[2].as_ref().unwrap().selected_indices, vec![1]);
    }

    proptest! {
        #[test]
        fn agrees_with_brute_force(
            sents in prop::collection::vec(prop::collection::vec(0usize..5, 1..5), 1..9),
            alpha in prop::sample::select(vec![0.2, 0.25, 0.4, 0.5, 0.75]),
        ) {
            let words = ["sun", "moon", "star", "sky", "cloud"];
            let text: Vec<String> = sents.iter().map(|s| s.iter().map(|&w| words[w]).collect::<Vec<_>>().join(" ") + ".").collect();
            let d = Document::new(text).unwrap();
            match (gsg_select(&d, alpha), brute_force_selection(&d, alpha)) {
                (Ok(p), Ok(b)) => {
                    prop_assert_eq!(&p.selected_indices, &b);
                    prop_assert_eq!(p.selected_indices.len(), selection_count(d.len(), alpha));
                }
                (Err(Error::TooShort { .. }), Err(Error::TooShort { .. })) => {
                    prop_assert_eq!(selection_count(d.len(), alpha), 0);
                }
                (a, b) => prop_assert!(false, "disagreement: {:?} vs {:?}", a, b),
            }
        }

        #[test]
        fn whitespace_duplication_is_ignored(words in prop::collection::vec("[a-e]{1,3}", 10..30)) {
            let text = words.chunks(3).map(|c| c.join(" ") + ".").collect::<Vec<_>>().join(" ");
            let spaced = text.replace(' ', "   ");
            let a = gsg_select(&split_sentences(&text).unwrap(), 0.3);
            let b = gsg_select(&split_sentences(&spaced).unwrap(), 0.3);
            match (a, b) {
                (Ok(a), Ok(b)) => prop_assert_eq!(a.selected_indices, b.selected_indices),
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false),
            }
        }

        #[test]
        fn selection_partitions(n in 5usize..12) {
            let d = Document::new((0..n).map(|i| format!("w{} w{}.", i % 3, i % 4)).collect()).unwrap();
            let p = gsg_select(&d, 0.2).unwrap();
            prop_assert_eq!(p.selected_indices.len(), n / 5);
            prop_assert!(p.selected_indices.iter().all(|&i| (1..=n).contains(&i)));
            prop_assert!(p.selected_indices.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
