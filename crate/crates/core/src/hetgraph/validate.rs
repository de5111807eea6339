use serde::Serialize;

use super::{EdgeType, HeteroGraph, NodeKind};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    SelfEdge { edge: EdgeType, node: usize },
    Asymmetric { edge: EdgeType, from: usize, to: usize },
    DuplicateEdge { edge: EdgeType, from: usize, to: usize },
    Weight { edge: EdgeType, a: usize, b: usize, weight: f64 },
    Endpoints { edge: EdgeType, a: usize, b: usize },
    UnknownNode { edge: EdgeType, node: usize },
    DocumentLinks { sentence: usize, count: usize },
    SentenceLinks { word: usize, count: usize },
    IncompleteDocumentGraph { missing: usize },
    Origin { node: usize, reason: String },
    Disconnected { components: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

pub(super) fn validate(g: &HeteroGraph) -> ValidationReport {
    let mut v = Vec::new();
    let n = g.len();

    for ty in EdgeType::ALL {
        let adj = &g.adjacency[ty.channel()];
        let (lo, hi) = ty.weight_range();
        for (a, list) in adj.iter().enumerate() {
            for (k, &(b, w)) in list.iter().enumerate() {
                if b >= n {
                    v.push(Violation::UnknownNode { edge: ty, node: b });
                    continue;
                }
                if a == b {
                    v.push(Violation::SelfEdge { edge: ty, node: a });
                }
                if k > 0 && list[k - 1].0 == b {
                    v.push(Violation::DuplicateEdge { edge: ty, from: a, to: b });
                }
                let mirrored = adj[b].iter().any(|&(c, x)| c == a && x == w);
                if !mirrored {
                    v.push(Violation::Asymmetric { edge: ty, from: a, to: b });
                }
                if a < b || !mirrored {
                    if !(w.is_finite() && lo <= w && w <= hi) {
                        v.push(Violation::Weight { edge: ty, a, b, weight: w });
                    }
                    let (ka, kb) = (g.nodes[a].kind, g.nodes[b].kind);
                    let (ea, eb) = ty.endpoints();
                    if !((ka, kb) == (ea, eb) || (kb, ka) == (ea, eb)) {
                        v.push(Violation::Endpoints { edge: ty, a, b });
                    }
                }
            }
        }
    }

    let ds = &g.adjacency[EdgeType::DocumentSentence.channel()];
    let sw = &g.adjacency[EdgeType::SentenceWord.channel()];
    for (i, node) in g.nodes.iter().enumerate() {
        match node.kind {
            NodeKind::Sentence => {
                if ds[i].len() != 1 {
                    v.push(Violation::DocumentLinks { sentence: i, count: ds[i].len() });
                } else if g.nodes.get(ds[i][0].0).is_some_and(|d| d.doc != node.doc) {
                    v.push(Violation::Origin { node: i, reason: "linked to another document".into() });
                }
            }
            NodeKind::Word => {
                if sw[i].len() != 1 {
                    v.push(Violation::SentenceLinks { word: i, count: sw[i].len() });
                } else if let Some(s) = g.nodes.get(sw[i][0].0) {
                    if (s.doc, s.sentence) != (node.doc, node.sentence) {
                        v.push(Violation::Origin { node: i, reason: "linked to another sentence".into() });
                    }
                }
            }
            NodeKind::Document => {}
        }
        let consistent = match node.kind {
            NodeKind::Document => node.sentence.is_none() && node.token.is_none() && node.index == node.doc,
            NodeKind::Sentence => node.sentence.is_some() && node.token.is_none(),
            NodeKind::Word => node.sentence.is_some() && node.token.is_some(),
        };
        if !consistent {
            v.push(Violation::Origin { node: i, reason: format!("fields inconsistent with {:?}", node.kind) });
        }
    }

    let docs: Vec<usize> = g.indices_of(NodeKind::Document).collect();
    let dd = &g.adjacency[EdgeType::DocumentSimilarity.channel()];
    let mut missing = 0;
    for (x, &a) in docs.iter().enumerate() {
        for &b in &docs[x + 1..] {
            if !dd[a].iter().any(|&(c, _)| c == b) {
                missing += 1;
            }
        }
    }
    if missing > 0 {
        v.push(Violation::IncompleteDocumentGraph { missing });
    }

    let components = count_components(g);
    if components > 1 {
        v.push(Violation::Disconnected { components });
    }

    ValidationReport { violations: v }
}

fn count_components(g: &HeteroGraph) -> usize {
    let n = g.len();
    let mut seen = vec![false; n];
    let mut components = 0;
    for start in 0..n {
        if seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(a) = stack.pop() {
            for adj in &g.adjacency {
                for &(b, _) in &adj[a] {
                    if b < n && !seen[b] {
                        seen[b] = true;
                        stack.push(b);
                    }
                }
            }
        }
    }
    components
}
