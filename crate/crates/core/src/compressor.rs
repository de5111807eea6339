//! Graph compression: score every node against a learned query vector, keep
//! the top fraction of sentence nodes together with their words and
//! documents, and scale the kept rows by their scores so the selection stays
//! differentiable.

use serde::{Deserialize, Serialize};

use crate::hetgraph::{EdgeType, HeteroGraph, NodeKind};
use crate::numeric::Var;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressorConfig {
    /// Fraction of sentence nodes kept, in (0, 1].
    pub k: f64,
    /// Rescale kept scores to mean 1 instead of using raw softmax mass.
    pub renorm_mask: bool,
}

impl Default for CompressorConfig {
    fn default() -> Self {
        CompressorConfig { k: 0.5, renorm_mask: false }
    }
}

impl CompressorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0 && self.k <= 1.0) {
            return Err(Error::Config(format!("compression ratio {} outside (0, 1]", self.k)));
        }
        Ok(())
    }
}

/// Softmax over all nodes of `Q′ · rᵀ`, as an `N × 1` column. Also returns
/// the raw logits.
pub fn node_scores<'t>(q_prime: Var<'t>, r: Var<'t>) -> Result<(Var<'t>, Var<'t>)> {
    let logits = q_prime.matmul(&r.transpose())?;
    let t = logits.transpose().softmax_rows().transpose();
    Ok((logits, t))
}

/// Number of sentences kept out of `n` at ratio `k`.
pub fn kept_count(n: usize, k: f64) -> usize {
    // guard against k·n landing a hair above an integer
    (((k * n as f64) - 1e-9).ceil().max(1.0) as usize).min(n)
}

/// Global indices of the `⌈k·|V_s|⌉` best-scoring sentence nodes, ascending.
/// Equal scores go to the lower index.
pub fn select_topk_sentences(scores: &[f64], graph: &HeteroGraph, k: f64) -> Result<Vec<usize>> {
    if scores.len() != graph.len() {
        return Err(Error::Data(format!("{} scores for {} nodes", scores.len(), graph.len())));
    }
    if !(k > 0.0 && k <= 1.0) {
        return Err(Error::Config(format!("compression ratio {k} outside (0, 1]")));
    }
    let mut sentences: Vec<usize> = graph.indices_of(NodeKind::Sentence).collect();
    if sentences.is_empty() {
        return Err(Error::Data("graph has no sentence nodes".into()));
    }
    let keep = kept_count(sentences.len(), k);
    sentences.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    sentences.truncate(keep);
    sentences.sort_unstable();
    Ok(sentences)
}

/// Adds every word of a kept sentence and every document holding one.
/// Returned in node order.
pub fn extend_selection(graph: &HeteroGraph, sentences: &[usize]) -> Result<Vec<usize>> {
    let mut keep = vec![false; graph.len()];
    for &s in sentences {
        if graph.nodes().get(s).map(|n| n.kind) != Some(NodeKind::Sentence) {
            return Err(Error::Data(format!("node {s} is not a sentence")));
        }
        keep[s] = true;
        for ty in [EdgeType::SentenceWord, EdgeType::DocumentSentence] {
            for &(j, _) in graph.neighbors(s, ty)? {
                keep[j] = true;
            }
        }
    }
    Ok(keep.iter().enumerate().filter(|(_, &k)| k).map(|(i, _)| i).collect())
}

/// Kept rows of `Q′` scaled by their scores. With `renorm_mask` the kept
/// scores are renormalized to sum to `|I|`, which is the softmax of the kept
/// logits times `|I|`.
pub fn compress<'t>(q_prime: Var<'t>, logits: Var<'t>, t: Var<'t>, selected: &[usize], renorm_mask: bool) -> Result<Var<'t>> {
    let rows = q_prime.gather_rows(selected)?;
    let mask = if renorm_mask {
        let kept = logits.gather_rows(selected)?;
        kept.transpose().softmax_rows().transpose().scale(selected.len() as f64)
    } else {
        t.gather_rows(selected)?
    };
    Ok(rows.scale_rows(&mask)?)
}

pub struct Compressed<'t> {
    /// `|I| × d` rows fed to the decoder.
    pub rows: Var<'t>,
    /// `N × 1` node scores.
    pub scores: Var<'t>,
    /// Kept node indices in node order.
    pub selected: Vec<usize>,
}

/// Full compression step with the learned query `r`.
pub fn compress_graph<'t>(
    q_prime: Var<'t>,
    r: Var<'t>,
    graph: &HeteroGraph,
    cfg: &CompressorConfig,
) -> Result<Compressed<'t>> {
    let (logits, t) = node_scores(q_prime, r)?;
    let scores: Vec<f64> = t.value().iter().copied().collect();
    let sentences = select_topk_sentences(&scores, graph, cfg.k)?;
    let selected = extend_selection(graph, &sentences)?;
    let rows = compress(q_prime, logits, t, &selected, cfg.renorm_mask)?;
    Ok(Compressed { rows, scores: t, selected })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::DocumentCluster;
    use crate::embeddings::{EmbeddingTable, SentenceEmbedder};
    use crate::hetgraph::{build_hetero_graph, GraphConfig};
    use crate::numeric::Tape;
    use ndarray::Array2;
    use proptest::prelude::*;

    fn graph() -> HeteroGraph {
        let c = DocumentCluster::from_texts(
            "c",
            &["Rain fell. The river rose fast. Roads closed.", "Crews worked. Water receded slowly."],
            None,
        )
        .unwrap();
        let words: Vec<String> = c.documents.iter().flat_map(|d| d.tokens().map(str::to_string)).collect();
        let t = EmbeddingTable::hashed(words.iter().map(String::as_str), 8, 4).unwrap();
        build_hetero_graph(&c, &t, &SentenceEmbedder::MeanOfWords, &GraphConfig::default()).unwrap()
    }

    #[test]
    fn kept_count_rounds_up() {
        assert_eq!(kept_count(10, 0.3), 3);
        assert_eq!(kept_count(10, 0.31), 4);
        assert_eq!(kept_count(5, 0.01), 1);
        assert_eq!(kept_count(5, 1.0), 5);
    }

    #[test]
    fn ties_prefer_lower_index() {
        let g = graph();
        let scores = vec![0.5; g.len()];
        let s = select_topk_sentences(&scores, &g, 0.4).unwrap();
        let first: Vec<usize> = g.indices_of(NodeKind::Sentence).take(2).collect();
        assert_eq!(s, first);
    }

    #[test]
    fn uniform_scores_with_renorm_pass_rows_through() {
        let g = graph();
        let tape = Tape::new();
        let n = g.len();
        let q = tape.constant(Array2::from_shape_fn((n, 4), |(i, j)| (i * 4 + j) as f64 * 0.1));
        let r = tape.constant(Array2::zeros((1, 4)));
        let cfg = CompressorConfig { k: 0.4, renorm_mask: true };
        let c = compress_graph(q, r, &g, &cfg).unwrap();
        let expect = q.gather_rows(&c.selected).unwrap();
        let diff = (&*c.rows.value() - &*expect.value()).mapv(f64::abs).fold(0.0f64, |m, &x| m.max(x));
        assert!(diff < 1e-12);
    }

    #[test]
    fn full_ratio_keeps_every_node() {
        let g = graph();
        let tape = Tape::new();
        let n = g.len();
        let q = tape.constant(Array2::from_shape_fn((n, 3), |(i, j)| ((i + j) as f64).sin()));
        let r = tape.row(&[0.3, -0.1, 0.2]);
        let c = compress_graph(q, r, &g, &CompressorConfig { k: 1.0, renorm_mask: false }).unwrap();
        assert_eq!(c.selected, (0..n).collect::<Vec<_>>());
        let t = c.scores.value().clone();
        let qv = q.value().clone();
        for i in 0..n {
            for j in 0..3 {
                assert_eq!(c.rows.value()[[i, j]], qv[[i, j]] * t[[i, 0]]);
            }
        }
    }

    #[test]
    fn zero_query_gives_uniform_scores() {
        let tape = Tape::new();
        let q = tape.constant(Array2::from_shape_fn((5, 3), |(i, j)| (i * j) as f64));
        let (_, t) = node_scores(q, tape.row(&[0.0, 0.0, 0.0])).unwrap();
        for &x in t.value().iter() {
            assert!((x - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn one_sentence_closure() {
        let c = DocumentCluster::from_texts("one", &["Cats chase mice"], None).unwrap();
        let t = EmbeddingTable::hashed(["cats", "chase", "mice"], 4, 1).unwrap();
        let g = build_hetero_graph(&c, &t, &SentenceEmbedder::MeanOfWords, &GraphConfig::default()).unwrap();
        let s: Vec<usize> = g.indices_of(NodeKind::Sentence).collect();
        assert_eq!(extend_selection(&g, &s).unwrap().len(), 5);
        assert!(extend_selection(&g, &[0]).is_err());
    }

    #[test]
    fn five_sentences_half_keeps_three() {
        assert_eq!(kept_count(5, 0.5), 3);
    }

    proptest! {
        #[test]
        fn selection_properties(raw in prop::collection::vec(-5.0f64..5.0, 64), k in 0.05f64..=1.0) {
            let g = graph();
            let scores = &raw[..g.len()];
            let s = select_topk_sentences(scores, &g, k).unwrap();
            let n_s = g.count(NodeKind::Sentence);
            prop_assert_eq!(s.len(), kept_count(n_s, k));
            // every unkept sentence scores no higher than every kept one
            for i in g.indices_of(NodeKind::Sentence).filter(|i| !s.contains(i)) {
                for &j in &s {
                    prop_assert!(scores[i] <= scores[j]);
                }
            }
            // order-preserving transforms keep the same selection
            let shifted: Vec<f64> = scores.iter().map(|x| 3.0 * x + 1.0).collect();
            prop_assert_eq!(&select_topk_sentences(&shifted, &g, k).unwrap(), &s);
            for k2 in [0.1, 0.25, 0.5, 0.75, 1.0] {
                let other = select_topk_sentences(scores, &g, k2).unwrap();
                let (small, big) = if k2 >= k { (&s, &other) } else { (&other, &s) };
                prop_assert!(small.iter().all(|i| big.contains(i)));
            }
            let all = extend_selection(&g, &s).unwrap();
            prop_assert!(all.windows(2).all(|w| w[0] < w[1]));
            for &i in &all {
                let node = &g.nodes()[i];
                match node.kind {
                    NodeKind::Sentence => prop_assert!(s.contains(&i)),
                    NodeKind::Word => {
                        let parent = g.neighbors(i, EdgeType::SentenceWord).unwrap()[0].0;
                        prop_assert!(s.contains(&parent));
                    }
                    NodeKind::Document => {
                        let kids = g.neighbors(i, EdgeType::DocumentSentence).unwrap();
                        prop_assert!(kids.iter().any(|(k, _)| s.contains(k)));
                    }
                }
            }
            for &i in &s {
                for &(w, _) in g.neighbors(i, EdgeType::SentenceWord).unwrap() {
                    prop_assert!(all.contains(&w));
                }
            }
        }
    }
}
