//! The assembled summarizer: text encoder → graph attention → compressor →
//! decoder, plus the per-cluster preparation that does not depend on
//! parameters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::compressor::{compress_graph, CompressorConfig};
use crate::corpus::{serialize_encoder_input, DocumentCluster, EncoderInput, Sentence, Vocab, EOS};
use crate::embeddings::{EmbeddingTable, SentenceEmbedder};
use crate::hetgraph::{build_hetero_graph, GraphConfig, HeteroGraph};
use crate::mgat::{mgat_encode, GraphChannels, MgatConfig};
use crate::numeric::{Init, ParamStore, ShapePlan, Tape, Var};
use crate::text_model::{
    decode_beam, encode_text, memory_matrix, unit_embeddings, BeamConfig, Ctx, TextModelConfig,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub text: TextModelConfig,
    pub mgat: MgatConfig,
    pub compressor: CompressorConfig,
    /// Without the compressor every node embedding goes to the decoder.
    pub use_compressor: bool,
    pub graph: GraphConfig,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.text.validate()?;
        self.mgat.validate()?;
        self.compressor.validate()
    }

    pub fn plan(&self) -> ShapePlan {
        let mut plan = ShapePlan::default();
        self.text.plan(&mut plan);
        self.mgat.plan(self.text.d_model, &mut plan);
        if self.use_compressor {
            plan.add("compressor.r", 1, self.text.d_model, Init::Xavier);
        }
        plan
    }
}

/// Vocabulary and fixed vectors used while preparing clusters.
pub struct Resources {
    pub vocab: Vocab,
    pub table: EmbeddingTable,
    pub embedder: SentenceEmbedder,
}

/// Encoder ids and the graph over the part of a cluster that fits the
/// encoder.
#[derive(Debug, Clone)]
pub struct GraphInput {
    pub encoder: EncoderInput,
    pub graph: HeteroGraph,
    pub channels: GraphChannels,
}

impl GraphInput {
    pub fn build(cluster: &DocumentCluster, res: &Resources, cfg: &ModelConfig) -> Result<Self> {
        let encoder = serialize_encoder_input(cluster, &res.vocab, cfg.text.max_input_len)?;
        let retained = encoder.boundaries.retained(cluster);
        let graph = build_hetero_graph(&retained, &res.table, &res.embedder, &cfg.graph)?;
        let channels = GraphChannels::from_graph(&graph, cfg.mgat.multi_channel)?;
        Ok(GraphInput { encoder, graph, channels })
    }
}

/// Training target of one cluster.
#[derive(Debug, Clone)]
pub struct SummaryTarget {
    pub ids: Vec<u32>,
    /// Graph of the summary seen as a one-document cluster.
    pub graph: GraphInput,
    pub reference: Vec<Sentence>,
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub id: String,
    pub source: GraphInput,
    pub target: Option<SummaryTarget>,
}

pub fn prepare(cluster: &DocumentCluster, res: &Resources, cfg: &ModelConfig) -> Result<Prepared> {
    let source = GraphInput::build(&cluster.without_summary(), res, cfg)?;
    let target = match (&cluster.summary, cluster.summary_cluster()) {
        (Some(reference), Some(summary)) => Some(SummaryTarget {
            ids: res.vocab.encode_summary(reference),
            graph: GraphInput::build(&summary, res, cfg)?,
            reference: reference.clone(),
        }),
        _ => None,
    };
    Ok(Prepared { id: cluster.id.clone(), source, target })
}

/// Refined node embeddings `Q′` of a graph input.
pub fn graph_embeddings<'t, R: Rng>(tape: &'t Tape, ctx: &mut Ctx<'_, R>, cfg: &ModelConfig, input: &GraphInput) -> Result<Var<'t>> {
    let q = encode_text(tape, ctx, &input.encoder.ids)?;
    let h = unit_embeddings(q, &input.graph, &input.encoder.boundaries)?;
    mgat_encode(tape, ctx.params, &cfg.mgat, h, &input.channels)
}

pub struct SourceForward<'t> {
    pub q_prime: Var<'t>,
    /// Rows handed to the decoder.
    pub rows: Var<'t>,
    /// Encoder positions of those rows.
    pub positions: Vec<usize>,
    /// Node scores when the compressor is on.
    pub scores: Option<Var<'t>>,
    pub selected: Vec<usize>,
}

pub fn forward_source<'t, R: Rng>(
    tape: &'t Tape,
    ctx: &mut Ctx<'_, R>,
    cfg: &ModelConfig,
    input: &GraphInput,
) -> Result<SourceForward<'t>> {
    let q_prime = graph_embeddings(tape, ctx, cfg, input)?;
    let all_positions = input.graph.token_positions();
    if !cfg.use_compressor {
        return Ok(SourceForward {
            q_prime,
            rows: q_prime,
            positions: all_positions,
            scores: None,
            selected: (0..input.graph.len()).collect(),
        });
    }
    let r = tape.param(ctx.params, "compressor.r")?;
    let c = compress_graph(q_prime, r, &input.graph, &cfg.compressor)?;
    Ok(SourceForward {
        q_prime,
        rows: c.rows,
        positions: c.selected.iter().map(|&i| all_positions[i]).collect(),
        scores: Some(c.scores),
        selected: c.selected,
    })
}

/// Generates a summary for a prepared source. The trailing EOS is dropped.
pub fn summarize(params: &ParamStore, cfg: &ModelConfig, input: &GraphInput, beam: &BeamConfig) -> Result<Vec<u32>> {
    let tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut ctx = Ctx { params, cfg: &cfg.text, train: false, rng: &mut rng };
    let fwd = forward_source(&tape, &mut ctx, cfg, input)?;
    let rows = fwd.rows.value().clone();
    if rows.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric(crate::numeric::NumericError::NonFinite("node embeddings".into())));
    }
    let memory = memory_matrix(params, &rows, &fwd.positions)?;
    let mut ids = decode_beam(params, &cfg.text, &memory, beam)?;
    if ids.last() == Some(&EOS) {
        ids.pop();
    }
    Ok(ids)
}
