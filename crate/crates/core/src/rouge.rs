//! ROUGE-1, ROUGE-2 and summary-level ROUGE-L.
//!
//! Counting follows the usual reference scorer: n-gram overlap is clipped by
//! multiset counts, and summary-level ROUGE-L takes, for each reference
//! sentence, the union of its LCS hits against every candidate sentence,
//! crediting each token occurrence at most once.

use std::collections::HashMap;

use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Sentence};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    pub fn from_counts(hits: usize, candidate_total: usize, reference_total: usize) -> Self {
        if hits == 0 || candidate_total == 0 || reference_total == 0 {
            return RougeScore::default();
        }
        let precision = hits as f64 / candidate_total as f64;
        let recall = hits as f64 / reference_total as f64;
        RougeScore {
            precision,
            recall,
            f1: 2.0 * precision * recall / (precision + recall),
        }
    }
}

/// R-1, R-2 and R-L for one candidate/reference pair.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RougeReport {
    pub rouge1: RougeScore,
    pub rouge2: RougeScore,
    pub rouge_l: RougeScore,
}

impl RougeReport {
    pub fn mean_f1(&self) -> f64 {
        (self.rouge1.f1 + self.rouge2.f1 + self.rouge_l.f1) / 3.0
    }
}

/// Token normalisation shared by every metric: lowercase, and optionally a
/// Snowball English stem.
pub struct Rouge {
    stemmer: Option<Stemmer>,
}

impl Default for Rouge {
    fn default() -> Self {
        Rouge::new(false)
    }
}

impl Rouge {
    pub fn new(stem: bool) -> Self {
        Rouge {
            stemmer: stem.then(|| Stemmer::create(Algorithm::English)),
        }
    }

    fn normalize(&self, tokens: &[String]) -> Vec<String> {
        tokens
            .iter()
            .map(|t| {
                let lower = t.to_lowercase();
                match &self.stemmer {
                    Some(s) if lower.chars().count() > 3 => s.stem(&lower).into_owned(),
                    _ => lower,
                }
            })
            .collect()
    }

    pub fn rouge_n(&self, candidate: &[String], reference: &[String], n: usize) -> RougeScore {
        assert!(n == 1 || n == 2, "ROUGE-N is defined here for n in {{1, 2}}");
        let (cn, rn) = (self.normalize(candidate), self.normalize(reference));
        let c = ngram_counts(&cn, n);
        let r = ngram_counts(&rn, n);
        let c_total: usize = c.values().sum();
        let r_total: usize = r.values().sum();
        let hits: usize = c.iter().map(|(g, &k)| k.min(r.get(g).copied().unwrap_or(0))).sum();
        RougeScore::from_counts(hits, c_total, r_total)
    }

    pub fn rouge_l_summary(&self, candidate: &[Sentence], reference: &[Sentence]) -> RougeScore {
        let c: Vec<Vec<String>> = candidate.iter().map(|s| self.normalize(&s.tokens)).collect();
        let r: Vec<Vec<String>> = reference.iter().map(|s| self.normalize(&s.tokens)).collect();
        summary_level_lcs(&c, &r)
    }

    pub fn report(&self, candidate: &[Sentence], reference: &[Sentence]) -> RougeReport {
        let flat = |s: &[Sentence]| -> Vec<String> { s.iter().flat_map(|x| x.tokens.iter().cloned()).collect() };
        let (c, r) = (flat(candidate), flat(reference));
        RougeReport {
            rouge1: self.rouge_n(&c, &r, 1),
            rouge2: self.rouge_n(&c, &r, 2),
            rouge_l: self.rouge_l_summary(candidate, reference),
        }
    }

    /// Mean of R-1, R-2 and summary-level R-L F1 between two documents.
    pub fn avg_f1(&self, a: &Document, b: &Document) -> f64 {
        self.report(&a.sentences, &b.sentences).mean_f1()
    }
}

pub fn rouge_n(candidate: &[String], reference: &[String], n: usize) -> RougeScore {
    Rouge::default().rouge_n(candidate, reference, n)
}

pub fn rouge_l_summary(candidate: &[Sentence], reference: &[Sentence]) -> RougeScore {
    Rouge::default().rouge_l_summary(candidate, reference)
}

pub fn rouge_avg_f1(a: &Document, b: &Document) -> f64 {
    Rouge::default().avg_f1(a, b)
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for g in tokens.windows(n) {
        *counts.entry(g).or_default() += 1;
    }
    counts
}

/// LCS dynamic-programming table: `t[i][j]` is the LCS length of
/// `reference[..i]` and `candidate[..j]`.
fn lcs_table<T: PartialEq>(reference: &[T], candidate: &[T]) -> Vec<Vec<usize>> {
    let mut t = vec![vec![0usize; candidate.len() + 1]; reference.len() + 1];
    for i in 1..=reference.len() {
        for j in 1..=candidate.len() {
            t[i][j] = if reference[i - 1] == candidate[j - 1] {
                t[i - 1][j - 1] + 1
            } else {
                t[i - 1][j].max(t[i][j - 1])
            };
        }
    }
    t
}

/// Reference positions of one LCS of `reference` and `candidate`.
pub fn lcs_positions<T: PartialEq>(reference: &[T], candidate: &[T]) -> Vec<usize> {
    let t = lcs_table(reference, candidate);
    let (mut i, mut j) = (reference.len(), candidate.len());
    let mut out = Vec::new();
    while i > 0 && j > 0 {
        if reference[i - 1] == candidate[j - 1] {
            out.push(i - 1);
            i -= 1;
            j -= 1;
        } else if t[i][j - 1] > t[i - 1][j] {
            j -= 1;
        } else {
            i -= 1;
        }
    }
    out.reverse();
    out
}

fn summary_level_lcs(candidate: &[Vec<String>], reference: &[Vec<String>]) -> RougeScore {
    let n: usize = candidate.iter().map(Vec::len).sum();
    let m: usize = reference.iter().map(Vec::len).sum();
    if n == 0 || m == 0 {
        return RougeScore::default();
    }
    let mut c_left: HashMap<&str, usize> = HashMap::new();
    let mut r_left: HashMap<&str, usize> = HashMap::new();
    for t in candidate.iter().flatten() {
        *c_left.entry(t).or_default() += 1;
    }
    for t in reference.iter().flatten() {
        *r_left.entry(t).or_default() += 1;
    }
    let mut hits = 0;
    for r in reference {
        let mut union: Vec<usize> = candidate.iter().flat_map(|c| lcs_positions(r, c)).collect();
        union.sort_unstable();
        union.dedup();
        for p in union {
            let tok = r[p].as_str();
            let (Some(cl), Some(rl)) = (c_left.get_mut(tok), r_left.get_mut(tok)) else {
                continue;
            };
            if *cl > 0 && *rl > 0 {
                *cl -= 1;
                *rl -= 1;
                hits += 1;
            }
        }
    }
    RougeScore::from_counts(hits, n, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn sents(parts: &[&str]) -> Vec<Sentence> {
        parts.iter().map(|p| Sentence::from_tokens(&toks(p))).collect()
    }

    #[test]
    fn rouge_n_cases() {
        let a = toks("the cat sat");
        let s = rouge_n(&a, &a, 1);
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        assert_eq!(rouge_n(&a, &toks("dogs ran far"), 2), RougeScore::default());
        let s = rouge_n(&toks("police kill the gunman"), &toks("police killed the gunman"), 1);
        assert_eq!((s.precision, s.recall, s.f1), (0.75, 0.75, 0.75));
        // Clipping: "the the the" against one "the".
        let s = rouge_n(&toks("the the the"), &toks("the cat"), 1);
        assert!((s.precision - 1.0 / 3.0).abs() < 1e-12 && (s.recall - 0.5).abs() < 1e-12);
        assert_eq!(rouge_n(&toks("solo"), &toks("solo"), 2), RougeScore::default());
    }

    #[test]
    fn rouge_l_cases() {
        let one = sents(&["a b c d"]);
        assert_eq!(rouge_l_summary(&one, &one).f1, 1.0);
        assert_eq!(rouge_l_summary(&[], &one), RougeScore::default());
        // reference sentence "a b c d" against candidates "a c" and "b d":
        // union of {0,2} and {1,3} credits all four tokens.
        let s = rouge_l_summary(&sents(&["a c", "b d"]), &one);
        assert_eq!((s.precision, s.recall), (1.0, 1.0));
        // repeated candidate tokens are only credited once
        let s = rouge_l_summary(&sents(&["a a", "a"]), &sents(&["a b"]));
        assert_eq!((s.precision, s.recall), (1.0 / 3.0, 0.5));
    }

    #[test]
    fn stemming_is_opt_in() {
        let c = toks("police killing gunmen");
        let r = toks("police killed gunmen");
        assert!(Rouge::new(true).rouge_n(&c, &r, 1).f1 > rouge_n(&c, &r, 1).f1);
    }

    #[test]
    fn avg_f1_extremes() {
        let a = Document { sentences: sents(&["x y z", "u v"]) };
        let b = Document { sentences: sents(&["p q"]) };
        assert!((rouge_avg_f1(&a, &a) - 1.0).abs() < 1e-12);
        assert_eq!(rouge_avg_f1(&a, &b), 0.0);
    }

    fn sentence_list() -> impl Strategy<Value = Vec<Vec<String>>> {
        let tok = prop::sample::select(vec!["a", "b", "c", "d"]).prop_map(str::to_string);
        prop::collection::vec(prop::collection::vec(tok, 1..5), 1..4)
    }

    fn to_sentences(v: &[Vec<String>]) -> Vec<Sentence> {
        v.iter().map(|t| Sentence::from_tokens(t)).collect()
    }

    proptest! {
        #[test]
        fn rouge_n_f1_symmetric(c in sentence_list(), r in sentence_list(), n in 1usize..=2) {
            let (c, r) = (c.concat(), r.concat());
            let ab = rouge_n(&c, &r, n);
            let ba = rouge_n(&r, &c, n);
            prop_assert_eq!(ab.f1, ba.f1);
            prop_assert_eq!(ab.precision, ba.recall);
        }

        #[test]
        fn scores_bounded_and_consistent(c in sentence_list(), r in sentence_list()) {
            let rep = Rouge::default().report(&to_sentences(&c), &to_sentences(&r));
            for s in [rep.rouge1, rep.rouge2, rep.rouge_l] {
                for x in [s.precision, s.recall, s.f1] {
                    prop_assert!((0.0..=1.0).contains(&x));
                }
                let expect = if s.precision + s.recall > 0.0 {
                    2.0 * s.precision * s.recall / (s.precision + s.recall)
                } else {
                    0.0
                };
                prop_assert!((s.f1 - expect).abs() < 1e-12);
            }
        }

        #[test]
        fn appending_reference_never_lowers_recall(c in sentence_list(), r in sentence_list()) {
            let (cs, rs) = (to_sentences(&c), to_sentences(&r));
            let mut extended = cs.clone();
            extended.extend(rs.iter().cloned());
            let before = Rouge::default().report(&cs, &rs);
            let after = Rouge::default().report(&extended, &rs);
            prop_assert!(after.rouge1.recall >= before.rouge1.recall);
            prop_assert!(after.rouge2.recall >= before.rouge2.recall);
            prop_assert!(after.rouge_l.recall >= before.rouge_l.recall);
            prop_assert_eq!(after.rouge_l.recall, 1.0);
        }
    }
}
