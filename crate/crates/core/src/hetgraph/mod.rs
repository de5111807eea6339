//! Heterogeneous document graph: word, sentence and document nodes joined by
//! six undirected, weighted edge types.
//!
//! | type | endpoints          | weight                                  |
//! |------|--------------------|-----------------------------------------|
//! | WE   | noun word – noun word | cosine of static word vectors        |
//! | WO   | adjacent words     | 1.0                                     |
//! | SS   | sentence – sentence | cosine of sentence embeddings          |
//! | DD   | document – document | mean F1 of ROUGE-1, ROUGE-2, ROUGE-L   |
//! | DS   | document – own sentence | 1.0                                |
//! | SW   | sentence – own word | 1.0                                    |
//!
//! Nodes are stored documents first, then sentences, then word occurrences,
//! each group in reading order. A node's global index is its position in
//! [`HeteroGraph::nodes`].

mod export;
mod tagger;
mod validate;

use serde::{Deserialize, Serialize};

use crate::corpus::DocumentCluster;
use crate::embeddings::{cosine, EmbeddingTable, SentenceEmbedder, SentenceKey};
use crate::rouge::Rouge;
use crate::{Error, Result};

pub use export::GraphDump;
pub use tagger::{is_closed_class, noun_candidates, Tagger};
pub use validate::{ValidationReport, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Document,
    Sentence,
    Word,
}

/// Edge types in channel order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeType {
    #[serde(rename = "we")]
    WordEmbedding,
    #[serde(rename = "wo")]
    WordOrder,
    #[serde(rename = "ss")]
    SentenceSimilarity,
    #[serde(rename = "dd")]
    DocumentSimilarity,
    #[serde(rename = "ds")]
    DocumentSentence,
    #[serde(rename = "sw")]
    SentenceWord,
}

impl EdgeType {
    pub const ALL: [EdgeType; 6] = [
        EdgeType::WordEmbedding,
        EdgeType::WordOrder,
        EdgeType::SentenceSimilarity,
        EdgeType::DocumentSimilarity,
        EdgeType::DocumentSentence,
        EdgeType::SentenceWord,
    ];

    pub fn channel(self) -> usize {
        self as usize
    }

    pub fn short_name(self) -> &'static str {
        ["we", "wo", "ss", "dd", "ds", "sw"][self.channel()]
    }

    /// Node kinds at the two ends, smaller kind first.
    pub fn endpoints(self) -> (NodeKind, NodeKind) {
        match self {
            EdgeType::WordEmbedding | EdgeType::WordOrder => (NodeKind::Word, NodeKind::Word),
            EdgeType::SentenceSimilarity => (NodeKind::Sentence, NodeKind::Sentence),
            EdgeType::DocumentSimilarity => (NodeKind::Document, NodeKind::Document),
            EdgeType::DocumentSentence => (NodeKind::Document, NodeKind::Sentence),
            EdgeType::SentenceWord => (NodeKind::Sentence, NodeKind::Word),
        }
    }

    pub fn weight_range(self) -> (f64, f64) {
        match self {
            EdgeType::WordEmbedding | EdgeType::SentenceSimilarity => (-1.0, 1.0),
            EdgeType::DocumentSimilarity => (0.0, 1.0),
            EdgeType::WordOrder | EdgeType::DocumentSentence | EdgeType::SentenceWord => (1.0, 1.0),
        }
    }
}

impl std::fmt::Display for EdgeType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.short_name().to_uppercase())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeId {
    pub kind: NodeKind,
    /// Ordinal within `kind`.
    pub index: usize,
    pub doc: usize,
    /// Sentence index within its document (sentence and word nodes).
    pub sentence: Option<usize>,
    /// Token index within its sentence (word nodes).
    pub token: Option<usize>,
    /// Position in the serialized encoder input: the token itself for words,
    /// the `<sent-sep>` for sentences and the `<doc-sep>` for documents.
    pub token_position: usize,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    /// Minimum word-vector cosine for a WE edge; values ≤ 0 keep every noun pair.
    pub we_threshold: f64,
    /// Minimum sentence cosine for an SS edge; `None` keeps every pair.
    pub ss_threshold: Option<f64>,
    pub tagger: Tagger,
    /// Stem tokens before computing DD ROUGE weights.
    pub rouge_stem: bool,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            we_threshold: 0.5,
            ss_threshold: None,
            tagger: Tagger::Heuristic,
            rouge_stem: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeteroGraph {
    pub(crate) nodes: Vec<NodeId>,
    /// `adjacency[channel][node]`: (neighbor, weight), ascending by neighbor.
    pub(crate) adjacency: [Vec<Vec<(usize, f64)>>; 6],
}

impl HeteroGraph {
    fn with_nodes(nodes: Vec<NodeId>) -> Self {
        let n = nodes.len();
        HeteroGraph {
            nodes,
            adjacency: std::array::from_fn(|_| vec![Vec::new(); n]),
        }
    }

    fn add_edge(&mut self, ty: EdgeType, a: usize, b: usize, w: f64) {
        let adj = &mut self.adjacency[ty.channel()];
        adj[a].push((b, w));
        adj[b].push((a, w));
    }

    fn finish(mut self) -> Self {
        for adj in &mut self.adjacency {
            for list in adj.iter_mut() {
                list.sort_by_key(|&(j, _)| j);
            }
        }
        self
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn count(&self, kind: NodeKind) -> usize {
        self.nodes.iter().filter(|n| n.kind == kind).count()
    }

    pub fn indices_of(&self, kind: NodeKind) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().enumerate().filter(move |(_, n)| n.kind == kind).map(|(i, _)| i)
    }

    pub fn token_positions(&self) -> Vec<usize> {
        self.nodes.iter().map(|n| n.token_position).collect()
    }

    /// Neighbors of `node` over edges of type `ty`, ascending by index.
    pub fn neighbors(&self, node: usize, ty: EdgeType) -> Result<&[(usize, f64)]> {
        self.adjacency[ty.channel()]
            .get(node)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Data(format!("node {node} not in graph of {} nodes", self.len())))
    }

    /// Undirected edges of one type as `(a, b, w)` with `a < b`, sorted.
    pub fn edges(&self, ty: EdgeType) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (a, list) in self.adjacency[ty.channel()].iter().enumerate() {
            out.extend(list.iter().filter(|&&(b, _)| a < b).map(|&(b, w)| (a, b, w)));
        }
        out
    }

    pub fn edge_count(&self, ty: EdgeType) -> usize {
        self.edges(ty).len()
    }

    /// Sets the weight of an existing undirected edge (both directions).
    pub fn set_edge_weight(&mut self, ty: EdgeType, a: usize, b: usize, w: f64) -> Result<()> {
        let adj = &mut self.adjacency[ty.channel()];
        for (from, to) in [(a, b), (b, a)] {
            let slot = adj
                .get_mut(from)
                .and_then(|l| l.iter_mut().find(|(j, _)| *j == to))
                .ok_or_else(|| Error::Data(format!("no {ty} edge {a}-{b}")))?;
            slot.1 = w;
        }
        Ok(())
    }

    /// Inserts a one-directional adjacency entry. Only useful for exercising
    /// the validator.
    pub fn insert_directed_edge(&mut self, ty: EdgeType, from: usize, to: usize, w: f64) {
        let list = &mut self.adjacency[ty.channel()][from];
        list.push((to, w));
        list.sort_by_key(|&(j, _)| j);
    }

    /// Same nodes with edges relabelled by `perm`: old node `i` becomes new
    /// node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> HeteroGraph {
        assert_eq!(perm.len(), self.len());
        let mut nodes = self.nodes.clone();
        for (i, n) in self.nodes.iter().enumerate() {
            nodes[perm[i]] = n.clone();
        }
        let mut g = HeteroGraph::with_nodes(nodes);
        for ty in EdgeType::ALL {
            for (a, b, w) in self.edges(ty) {
                g.add_edge(ty, perm[a], perm[b], w);
            }
        }
        g.finish()
    }

    pub fn validate(&self) -> ValidationReport {
        validate::validate(self)
    }

    pub fn dump(&self) -> GraphDump {
        GraphDump::from_graph(self)
    }

    pub fn to_dot(&self, name: &str) -> String {
        export::to_dot(self, name)
    }
}

/// Builds the heterogeneous graph of a cluster. A summary is handled by
/// passing [`DocumentCluster::summary_cluster`].
pub fn build_hetero_graph(
    cluster: &DocumentCluster,
    table: &EmbeddingTable,
    embedder: &SentenceEmbedder,
    cfg: &GraphConfig,
) -> Result<HeteroGraph> {
    if cluster.documents.is_empty() || cluster.sentence_count() == 0 {
        return Err(Error::Data(format!("cluster {} is empty", cluster.id)));
    }

    let mut docs = Vec::new();
    let mut sents = Vec::new();
    let mut words = Vec::new();
    let mut pos = 0;
    for (d, doc) in cluster.documents.iter().enumerate() {
        docs.push(NodeId {
            kind: NodeKind::Document,
            index: d,
            doc: d,
            sentence: None,
            token: None,
            token_position: pos,
            label: format!("d{d}"),
        });
        pos += 1;
        for (s, sentence) in doc.sentences.iter().enumerate() {
            for (t, tok) in sentence.tokens.iter().enumerate() {
                words.push(NodeId {
                    kind: NodeKind::Word,
                    index: words.len(),
                    doc: d,
                    sentence: Some(s),
                    token: Some(t),
                    token_position: pos + t,
                    label: tok.clone(),
                });
            }
            pos += sentence.len();
            sents.push(NodeId {
                kind: NodeKind::Sentence,
                index: sents.len(),
                doc: d,
                sentence: Some(s),
                token: None,
                token_position: pos,
                label: format!("d{d}s{s}"),
            });
            pos += 1;
        }
    }
    let n_docs = docs.len();
    let n_sents = sents.len();
    let sent_base = n_docs;
    let word_base = n_docs + n_sents;

    let mut nodes = docs;
    nodes.extend(sents);
    nodes.extend(words);
    let mut g = HeteroGraph::with_nodes(nodes);

    let mut sentence_vectors = Vec::with_capacity(n_sents);
    let mut nouns = Vec::new();
    let mut sid = sent_base;
    let mut wid = word_base;
    for (d, doc) in cluster.documents.iter().enumerate() {
        for (s, sentence) in doc.sentences.iter().enumerate() {
            g.add_edge(EdgeType::DocumentSentence, d, sid, 1.0);
            for t in 0..sentence.len() {
                g.add_edge(EdgeType::SentenceWord, sid, wid + t, 1.0);
                if t > 0 {
                    g.add_edge(EdgeType::WordOrder, wid + t - 1, wid + t, 1.0);
                }
            }
            for t in noun_candidates(sentence, cfg.tagger)? {
                nouns.push((wid + t, table.lookup(&sentence.tokens[t])));
            }
            let key = SentenceKey {
                cluster: &cluster.id,
                doc: d,
                sentence: s,
            };
            sentence_vectors.push(embedder.embed(key, sentence, table)?);
            sid += 1;
            wid += sentence.len();
        }
    }

    for i in 0..n_sents {
        for j in i + 1..n_sents {
            let w = cosine(&sentence_vectors[i], &sentence_vectors[j])?;
            if cfg.ss_threshold.is_none_or(|t| w >= t) {
                g.add_edge(EdgeType::SentenceSimilarity, sent_base + i, sent_base + j, w);
            }
        }
    }

    let rouge = Rouge::new(cfg.rouge_stem);
    for a in 0..n_docs {
        for b in a + 1..n_docs {
            let w = rouge.avg_f1(&cluster.documents[a], &cluster.documents[b]);
            g.add_edge(EdgeType::DocumentSimilarity, a, b, w);
        }
    }

    for (i, &(a, va)) in nouns.iter().enumerate() {
        for &(b, vb) in &nouns[i + 1..] {
            let w = cosine(va, vb)?;
            if cfg.we_threshold <= 0.0 || w >= cfg.we_threshold {
                g.add_edge(EdgeType::WordEmbedding, a, b, w);
            }
        }
    }

    Ok(g.finish())
}
