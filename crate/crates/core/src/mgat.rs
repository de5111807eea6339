//! Multi-channel graph attention. Every edge type is its own channel with its
//! own attention heads; a node attends over its typed neighbors plus itself,
//! with edge weights scaling the attention logits. Head and channel outputs
//! are concatenated and projected back to the model width.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::hetgraph::{EdgeType, HeteroGraph};
use crate::numeric::{Init, Matrix, ParamStore, ShapePlan, Tape, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MgatConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_head: usize,
    pub leaky_slope: f64,
    /// Add each layer's input to its output.
    pub residual: bool,
    /// One channel per edge type; otherwise a single channel over all edges.
    pub multi_channel: bool,
}

impl Default for MgatConfig {
    fn default() -> Self {
        MgatConfig {
            n_layers: 2,
            n_heads: 2,
            d_head: 32,
            leaky_slope: 0.2,
            residual: true,
            multi_channel: true,
        }
    }
}

impl MgatConfig {
    pub fn n_channels(&self) -> usize {
        if self.multi_channel {
            EdgeType::ALL.len()
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_heads == 0 || self.d_head == 0 {
            return Err(Error::Config("graph attention needs at least one head of positive width".into()));
        }
        Ok(())
    }

    pub fn plan(&self, d_model: usize, plan: &mut ShapePlan) {
        for l in 0..self.n_layers {
            for c in 0..self.n_channels() {
                for m in 0..self.n_heads {
                    plan.add(head_param(l, c, m, "w"), self.d_head, d_model, Init::Xavier);
                    plan.add(head_param(l, c, m, "a"), 1, 2 * self.d_head, Init::Xavier);
                }
            }
            plan.add(format!("mgat.l{l}.u"), d_model, self.n_channels() * self.n_heads * self.d_head, Init::Xavier);
        }
    }
}

fn head_param(layer: usize, channel: usize, head: usize, what: &str) -> String {
    format!("mgat.l{layer}.c{channel}.h{head}.{what}")
}

/// Directed edge list of one channel, grouped by source node and including a
/// weight-1 self-loop for every node.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEdges {
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    /// `E × 1` edge weights.
    pub weight: Matrix,
}

/// Per-channel edge lists of a graph, ready for attention.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphChannels {
    pub n_nodes: usize,
    pub channels: Vec<ChannelEdges>,
}

impl GraphChannels {
    /// `multi_channel = false` merges all edge types into one channel; a pair
    /// joined by several types keeps the largest weight.
    pub fn from_graph(graph: &HeteroGraph, multi_channel: bool) -> Result<Self> {
        let n = graph.len();
        let keys: Vec<(crate::hetgraph::NodeKind, usize)> =
            graph.nodes().iter().map(|node| (node.kind, node.index)).collect();
        let mut ranked: Vec<usize> = (0..n).collect();
        ranked.sort_by_key(|&i| keys[i]);
        let mut rank = vec![0; n];
        for (r, &i) in ranked.iter().enumerate() {
            rank[i] = r;
        }
        let mut lists: Vec<Vec<BTreeMap<usize, f64>>> = Vec::new();
        for ty in EdgeType::ALL {
            if multi_channel || lists.is_empty() {
                lists.push(vec![BTreeMap::new(); n]);
            }
            let target = lists.last_mut().expect("at least one channel");
            for (i, adj) in target.iter_mut().enumerate() {
                for &(j, w) in graph.neighbors(i, ty)? {
                    let slot = adj.entry(j).or_insert(w);
                    *slot = slot.max(w);
                }
            }
        }
        Self::from_adjacency(n, &rank, lists)
    }

    /// Builds channels from explicit undirected edge lists `(a, b, w)`.
    /// `rank` fixes the order in which each node's neighbors are visited.
    pub fn from_edges(n: usize, rank: &[usize], channels: &[Vec<(usize, usize, f64)>]) -> Result<Self> {
        let mut lists = Vec::new();
        for edges in channels {
            let mut adj = vec![BTreeMap::new(); n];
            for &(a, b, w) in edges {
                if a >= n || b >= n || a == b {
                    return Err(Error::Data(format!("bad edge {a}-{b} in graph of {n} nodes")));
                }
                adj[a].insert(b, w);
                adj[b].insert(a, w);
            }
            lists.push(adj);
        }
        Self::from_adjacency(n, rank, lists)
    }

    fn from_adjacency(n: usize, rank: &[usize], lists: Vec<Vec<BTreeMap<usize, f64>>>) -> Result<Self> {
        if rank.len() != n {
            return Err(Error::Data(format!("{} ranks for {n} nodes", rank.len())));
        }
        let channels = lists
            .into_iter()
            .map(|adj| {
                let (mut src, mut dst, mut weight) = (Vec::new(), Vec::new(), Vec::new());
                for (i, nbrs) in adj.into_iter().enumerate() {
                    let mut row: Vec<(usize, f64)> = nbrs.into_iter().collect();
                    row.push((i, 1.0));
                    // visiting neighbors in a label-independent order makes
                    // the sums identical under node relabelling
                    row.sort_by_key(|&(j, _)| rank[j]);
                    for (j, w) in row {
                        src.push(i);
                        dst.push(j);
                        weight.push(w);
                    }
                }
                let e = weight.len();
                ChannelEdges {
                    src,
                    dst,
                    weight: Matrix::from_shape_vec((e, 1), weight).expect("edge weights"),
                }
            })
            .collect();
        Ok(GraphChannels { n_nodes: n, channels })
    }
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

/// Unnormalized attention logit of edge i → j:
/// `leaky_relu(e_ij · (w₁·W h_i + w₂·W h_j))`.
pub fn attention_coefficient(h_i: &[f64], h_j: &[f64], edge_weight: f64, w: &Matrix, a: &[f64], slope: f64) -> f64 {
    let dh = w.nrows();
    let project = |h: &[f64]| -> Vec<f64> {
        (0..dh).map(|r| w.row(r).iter().zip(h).map(|(x, y)| x * y).sum()).collect()
    };
    let (pi, pj) = (project(h_i), project(h_j));
    let s: f64 = pi.iter().zip(&a[..dh]).map(|(x, y)| x * y).sum::<f64>()
        + pj.iter().zip(&a[dh..]).map(|(x, y)| x * y).sum::<f64>();
    leaky(edge_weight * s, slope)
}

/// One attention head on one channel. Returns the `N × d_head` output and
/// the normalized attention weight of every edge.
pub fn channel_attention<'t>(
    tape: &'t Tape,
    params: &ParamStore,
    cfg: &MgatConfig,
    (layer, channel, head): (usize, usize, usize),
    h: Var<'t>,
    edges: &ChannelEdges,
) -> Result<(Var<'t>, Var<'t>)> {
    let w = tape.param(params, &head_param(layer, channel, head, "w"))?;
    let a = tape.param(params, &head_param(layer, channel, head, "a"))?;
    let dh = cfg.d_head;
    let wh = h.matmul(&w.transpose())?;
    let src_score = wh.matmul(&a.slice_cols(0, dh)?.transpose())?;
    let dst_score = wh.matmul(&a.slice_cols(dh, 2 * dh)?.transpose())?;
    let s = src_score.gather_rows(&edges.src)?.add(&dst_score.gather_rows(&edges.dst)?)?;
    let e = tape.constant(edges.weight.clone());
    let logits = s.mul(&e)?.leaky_relu(cfg.leaky_slope);
    let alpha = logits.segment_softmax(&edges.src)?;
    let messages = wh.gather_rows(&edges.dst)?.scale_rows(&alpha)?;
    let out = messages.scatter_add_rows(&edges.src, h.nrows())?.elu();
    Ok((out, alpha))
}

pub struct LayerOutput<'t> {
    /// Head outputs concatenated channel by channel, before projection.
    pub blocks: Var<'t>,
    pub out: Var<'t>,
}

pub fn mgat_layer<'t>(
    tape: &'t Tape,
    params: &ParamStore,
    cfg: &MgatConfig,
    layer: usize,
    h: Var<'t>,
    graph: &GraphChannels,
) -> Result<LayerOutput<'t>> {
    if graph.channels.len() != cfg.n_channels() {
        return Err(Error::Config(format!(
            "graph prepared with {} channels, attention expects {}",
            graph.channels.len(),
            cfg.n_channels()
        )));
    }
    if h.nrows() != graph.n_nodes {
        return Err(Error::Data(format!("{} node rows for a graph of {} nodes", h.nrows(), graph.n_nodes)));
    }
    let mut parts = Vec::with_capacity(cfg.n_channels() * cfg.n_heads);
    for (c, edges) in graph.channels.iter().enumerate() {
        for m in 0..cfg.n_heads {
            parts.push(channel_attention(tape, params, cfg, (layer, c, m), h, edges)?.0);
        }
    }
    let blocks = Var::concat(&parts, 1)?;
    let u = tape.param(params, &format!("mgat.l{layer}.u"))?;
    let mut out = blocks.matmul(&u.transpose())?;
    if cfg.residual {
        out = out.add(&h)?;
    }
    Ok(LayerOutput { blocks, out })
}

/// Refines initial node embeddings through every layer.
pub fn mgat_encode<'t>(
    tape: &'t Tape,
    params: &ParamStore,
    cfg: &MgatConfig,
    h: Var<'t>,
    graph: &GraphChannels,
) -> Result<Var<'t>> {
    let mut x = h;
    for l in 0..cfg.n_layers {
        x = mgat_layer(tape, params, cfg, l, x, graph)?.out;
    }
    Ok(x)
}
