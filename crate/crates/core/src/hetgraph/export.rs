use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{EdgeType, HeteroGraph, NodeId, NodeKind};

/// JSON-friendly adjacency dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDump {
    pub nodes: Vec<NodeId>,
    /// Per edge type (`we`, `wo`, ...): `[a, b, weight]` with `a < b`.
    pub edges: BTreeMap<String, Vec<(usize, usize, f64)>>,
    pub node_counts: BTreeMap<String, usize>,
    pub edge_counts: BTreeMap<String, usize>,
}

impl GraphDump {
    pub fn from_graph(g: &HeteroGraph) -> Self {
        let mut edges = BTreeMap::new();
        let mut edge_counts = BTreeMap::new();
        for ty in EdgeType::ALL {
            let e = g.edges(ty);
            edge_counts.insert(ty.short_name().to_string(), e.len());
            edges.insert(ty.short_name().to_string(), e);
        }
        let node_counts = [
            ("document", NodeKind::Document),
            ("sentence", NodeKind::Sentence),
            ("word", NodeKind::Word),
        ]
        .into_iter()
        .map(|(name, kind)| (name.to_string(), g.count(kind)))
        .collect();
        GraphDump {
            nodes: g.nodes.clone(),
            edges,
            node_counts,
            edge_counts,
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

pub(super) fn to_dot(g: &HeteroGraph, name: &str) -> String {
    let mut out = String::new();
    writeln!(out, "graph \"{}\" {{", escape(name)).unwrap();
    for (i, n) in g.nodes.iter().enumerate() {
        let shape = match n.kind {
            NodeKind::Document => "triangle",
            NodeKind::Sentence => "box",
            NodeKind::Word => "ellipse",
        };
        writeln!(out, "  n{i} [label=\"{}\", shape={shape}];", escape(&n.label)).unwrap();
    }
    for ty in EdgeType::ALL {
        for (a, b, w) in g.edges(ty) {
            writeln!(out, "  n{a} -- n{b} [type={}, weight=\"{w:.6}\"];", ty.short_name()).unwrap();
        }
    }
    out.push_str("}\n");
    out
}
