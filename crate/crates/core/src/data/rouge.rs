//! ROUGE-N and ROUGE-L F1 over lowercased alphanumeric tokens.

use std::collections::HashMap;

use super::text::rouge_tokens;

/// F1 of clipped n-gram overlap. Zero when either side has no n-grams.
pub fn rouge_n(candidate: &str, reference: &str, n: usize) -> f64 {
    assert!(n >= 1, "n-gram order must be positive");
    rouge_n_tokens(&rouge_tokens(candidate), &rouge_tokens(reference), n)
}

pub fn rouge_n_tokens(candidate: &[String], reference: &[String], n: usize) -> f64 {
    let c = ngram_counts(candidate, n);
    let r = ngram_counts(reference, n);
    let total_c: usize = c.values().sum();
    let total_r: usize = r.values().sum();
    if total_c == 0 || total_r == 0 {
        return 0.0;
    }
    let overlap: usize = c.iter().map(|(g, &k)| k.min(r.get(g).copied().unwrap_or(0))).sum();
    f1(overlap, total_c, total_r)
}

/// F1 from the longest common subsequence of tokens.
pub fn rouge_l(candidate: &str, reference: &str) -> f64 {
    let c = rouge_tokens(candidate);
    let r = rouge_tokens(reference);
    if c.is_empty() || r.is_empty() {
        return 0.0;
    }
    f1(lcs_len(&c, &r), c.len(), r.len())
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

fn f1(overlap: usize, cand: usize, refr: usize) -> f64 {
    if overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / cand as f64;
    let r = overlap as f64 / refr as f64;
    2.0 * p * r / (p + r)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn rouge_n_examples() {
        assert_eq!(rouge_n("the cat sat", "the cat sat", 1), 1.0);
        assert_eq!(rouge_n("the cat sat", "the cat sat", 2), 1.0);
        assert_eq!(rouge_n("a b c", "x y z", 1), 0.0);
        assert!((rouge_n("a b c", "a b d", 1) - 2.0 / 3.0).abs() < 1e-15);
        assert!((rouge_n("a b c", "a b d", 2) - 0.5).abs() < 1e-15);
        assert_eq!(rouge_n("", "a b", 1), 0.0);
        assert_eq!(rouge_n("a", "a", 2), 0.0);
    }

    #[test]
    fn counts_are_clipped() {
        // overlap min(3,1) = 1, P = 1/3, R = 1
        assert!((rouge_n("a a a", "a b", 1) - 2.0 * (1.0 / 3.0) * 0.5 / (1.0 / 3.0 + 0.5)).abs() < 1e-15);
    }

    #[test]
    fn rouge_l_examples() {
        assert_eq!(rouge_l("a b c", "a b c"), 1.0);
        assert!((rouge_l("a x b", "a b") - 0.8).abs() < 1e-15);
        assert_eq!(rouge_l("", "a b"), 0.0);
        assert_eq!(lcs_len(&[1, 2, 3, 4], &[2, 4, 3]), 2);
    }

    proptest! {
        #[test]
        fn f1_is_symmetric(a in "[abcd ]{0,24}", b in "[abcd ]{0,24}", n in 1usize..3) {
            prop_assert_eq!(rouge_n(&a, &b, n), rouge_n(&b, &a, n));
            prop_assert_eq!(rouge_l(&a, &b), rouge_l(&b, &a));
            let s = rouge_n(&a, &b, n);
            prop_assert!((0.0..=1.0).contains(&s));
        }
    }
}
