//! Small transformer text model: a local-window encoder with global
//! attention on delimiter positions, and a causal decoder that cross-attends
//! over compressed graph node embeddings.

mod beam;
mod decoder;
mod encoder;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::BoundaryIndex;
use crate::hetgraph::{HeteroGraph, NodeKind};
use crate::numeric::{Init, NumericError, ParamStore, ShapePlan, Tape, Var};
use crate::{Error, Result};

pub use beam::{beam_search, greedy_search, BeamConfig};
pub use decoder::{decode_beam, decode_greedy, decode_teacher_forced, memory_matrix, memory_with_positions};
pub use encoder::{encode_text, encode_text_traced, encoder_mask, EncoderOutput};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers_enc: usize,
    pub n_layers_dec: usize,
    pub n_heads: usize,
    pub ffn_dim: usize,
    /// Local attention radius: position i sees i ± window.
    pub attention_window: usize,
    pub max_input_len: usize,
    pub max_out_len: usize,
    pub dropout: f64,
    /// Rank beam hypotheses by mean rather than total log-probability.
    pub length_norm: bool,
}

impl Default for TextModelConfig {
    fn default() -> Self {
        TextModelConfig {
            vocab_size: 0,
            d_model: 128,
            n_layers_enc: 2,
            n_layers_dec: 2,
            n_heads: 4,
            ffn_dim: 256,
            attention_window: 16,
            max_input_len: crate::corpus::DEFAULT_MAX_INPUT_LEN,
            max_out_len: 512,
            dropout: 0.1,
            length_norm: true,
        }
    }
}

impl TextModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.attention_window < 1 {
            return Err(Error::Config("attention window must be at least 1".into()));
        }
        if self.vocab_size <= crate::corpus::DOC_SEP as usize {
            return Err(Error::Config(format!("vocabulary of {} entries is too small", self.vocab_size)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.max_out_len == 0 {
            return Err(Error::Config("max output length must be positive".into()));
        }
        Ok(())
    }

    pub fn plan(&self, plan: &mut ShapePlan) {
        let d = self.d_model;
        plan.add("embed.tok", self.vocab_size, d, Init::Xavier);
        plan.add("enc.pos", self.max_input_len, d, Init::Xavier);
        for l in 0..self.n_layers_enc {
            let p = format!("enc.l{l}");
            plan_attention(plan, &format!("{p}.attn"), d);
            plan_norm(plan, &format!("{p}.ln1"), d);
            plan_ffn(plan, &format!("{p}.ffn"), d, self.ffn_dim);
            plan_norm(plan, &format!("{p}.ln2"), d);
        }
        plan.add("dec.pos", self.max_out_len + 1, d, Init::Xavier);
        for l in 0..self.n_layers_dec {
            let p = format!("dec.l{l}");
            plan_attention(plan, &format!("{p}.self"), d);
            plan_norm(plan, &format!("{p}.ln1"), d);
            plan_attention(plan, &format!("{p}.cross"), d);
            plan_norm(plan, &format!("{p}.ln2"), d);
            plan_ffn(plan, &format!("{p}.ffn"), d, self.ffn_dim);
            plan_norm(plan, &format!("{p}.ln3"), d);
        }
        plan.add("dec.out.w", d, self.vocab_size, Init::Xavier);
        plan.add("dec.out.b", 1, self.vocab_size, Init::Zeros);
    }
}

fn plan_attention(plan: &mut ShapePlan, prefix: &str, d: usize) {
    for m in ["q", "k", "v", "o"] {
        plan.add(format!("{prefix}.{m}"), d, d, Init::Xavier);
    }
    plan.add(format!("{prefix}.bo"), 1, d, Init::Zeros);
}

fn plan_norm(plan: &mut ShapePlan, prefix: &str, d: usize) {
    plan.add(format!("{prefix}.g"), 1, d, Init::Ones);
    plan.add(format!("{prefix}.b"), 1, d, Init::Zeros);
}

fn plan_ffn(plan: &mut ShapePlan, prefix: &str, d: usize, hidden: usize) {
    plan.add(format!("{prefix}.w1"), d, hidden, Init::Xavier);
    plan.add(format!("{prefix}.b1"), 1, hidden, Init::Zeros);
    plan.add(format!("{prefix}.w2"), hidden, d, Init::Xavier);
    plan.add(format!("{prefix}.b2"), 1, d, Init::Zeros);
}

const LN_EPS: f64 = 1e-5;

/// Everything a forward pass needs besides the inputs.
pub struct Ctx<'a, R> {
    pub params: &'a ParamStore,
    pub cfg: &'a TextModelConfig,
    /// Dropout is applied only when `train` is set.
    pub train: bool,
    pub rng: &'a mut R,
}

impl<R: Rng> Ctx<'_, R> {
    fn dropout<'t>(&mut self, x: Var<'t>) -> Var<'t> {
        if self.train {
            x.dropout(self.cfg.dropout, self.rng)
        } else {
            x
        }
    }
}

fn layer_norm<'t>(tape: &'t Tape, params: &ParamStore, prefix: &str, x: Var<'t>) -> Result<Var<'t>, NumericError> {
    let g = tape.param(params, &format!("{prefix}.g"))?;
    let b = tape.param(params, &format!("{prefix}.b"))?;
    x.layer_norm(&g, &b, LN_EPS)
}

fn feed_forward<'t>(tape: &'t Tape, params: &ParamStore, prefix: &str, x: Var<'t>) -> Result<Var<'t>, NumericError> {
    let w1 = tape.param(params, &format!("{prefix}.w1"))?;
    let b1 = tape.param(params, &format!("{prefix}.b1"))?;
    let w2 = tape.param(params, &format!("{prefix}.w2"))?;
    let b2 = tape.param(params, &format!("{prefix}.b2"))?;
    x.matmul(&w1)?.add_row(&b1)?.gelu().matmul(&w2)?.add_row(&b2)
}

/// Multi-head attention of `queries` over `keys_values`. `blocked[i][j]`
/// removes key j from query i's softmax. Returns the output and each head's
/// attention matrix.
fn multi_head_attention<'t>(
    tape: &'t Tape,
    params: &ParamStore,
    prefix: &str,
    n_heads: usize,
    queries: Var<'t>,
    keys_values: Var<'t>,
    blocked: Option<&Array2<bool>>,
) -> Result<(Var<'t>, Vec<Var<'t>>), NumericError> {
    let p = |m: &str| tape.param(params, &format!("{prefix}.{m}"));
    let q = queries.matmul(&p("q")?)?;
    let k = keys_values.matmul(&p("k")?)?;
    let v = keys_values.matmul(&p("v")?)?;
    let d = q.ncols();
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut heads = Vec::with_capacity(n_heads);
    let mut probs = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let (lo, hi) = (h * dh, (h + 1) * dh);
        let qh = q.slice_cols(lo, hi)?;
        let kh = k.slice_cols(lo, hi)?;
        let vh = v.slice_cols(lo, hi)?;
        let mut scores = qh.matmul(&kh.transpose())?.scale(scale);
        if let Some(mask) = blocked {
            scores = scores.masked_fill(mask, f64::NEG_INFINITY)?;
        }
        let attn = scores.softmax_rows();
        heads.push(attn.matmul(&vh)?);
        probs.push(attn);
    }
    let out = Var::concat(&heads, 1)?.matmul(&p("o")?)?.add_row(&p("bo")?)?;
    Ok((out, probs))
}

/// Checks that graph nodes point at the matching encoder positions.
pub fn check_alignment(graph: &HeteroGraph, boundaries: &BoundaryIndex) -> Result<()> {
    let mismatch = |i: usize, why: &str| Err(Error::Data(format!("node {i} misaligned with encoder input: {why}")));
    if graph.count(NodeKind::Document) != boundaries.documents.len()
        || graph.count(NodeKind::Sentence) != boundaries.sentence_count()
    {
        return Err(Error::Data(format!(
            "graph has {} documents / {} sentences, encoder input keeps {} / {}",
            graph.count(NodeKind::Document),
            graph.count(NodeKind::Sentence),
            boundaries.documents.len(),
            boundaries.sentence_count()
        )));
    }
    for (i, node) in graph.nodes().iter().enumerate() {
        let Some(doc) = boundaries.documents.get(node.doc) else {
            return mismatch(i, "document not retained");
        };
        let expected = match (node.kind, node.sentence, node.token) {
            (NodeKind::Document, _, _) => Some(doc.doc_sep),
            (NodeKind::Sentence, Some(s), _) => doc.sentences.get(s).map(|b| b.sent_sep),
            (NodeKind::Word, Some(s), Some(t)) => doc
                .sentences
                .get(s)
                .and_then(|b| (t < b.tokens.len()).then_some(b.tokens.start + t)),
            _ => None,
        };
        if expected != Some(node.token_position) {
            return mismatch(i, &format!("expected position {expected:?}, node has {}", node.token_position));
        }
    }
    Ok(())
}

/// Initial node embeddings: each node takes the encoder row at its token
/// position (its own token, its `<sent-sep>` or its `<doc-sep>`).
pub fn unit_embeddings<'t>(q: Var<'t>, graph: &HeteroGraph, boundaries: &BoundaryIndex) -> Result<Var<'t>> {
    check_alignment(graph, boundaries)?;
    Ok(q.gather_rows(&graph.token_positions())?)
}
