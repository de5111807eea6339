use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use hgsum::config::RunConfig;
use hgsum::hetgraph::Tagger;
use hgsum::numeric::Precision;

#[derive(Debug, Parser)]
#[command(name = "hgsum", version, about = "Heterogeneous-graph multi-document summarization")]
pub struct Cli {
    /// TOML or JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(flatten)]
    pub values: ValueOverrides,

    #[command(flatten)]
    pub switches: Switches,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on --data, writing checkpoint, metrics, config and vocabulary to --out.
    Train,
    /// Generate one summary per cluster with beam search.
    Summarize {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Vocabulary file; defaults to vocab.txt next to the checkpoint.
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Clusters to summarize; defaults to --data.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Output file of {"id", "summary"} records; defaults to stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score generated summaries against references with matching ids.
    Eval {
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        references: PathBuf,
    },
    /// Mean summary length and ROUGE for several compression ratios.
    Ksweep {
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.5,0.8")]
        ks: Vec<f64>,
        /// Re-decode with this checkpoint instead of training per ratio.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
    /// Export each cluster's graph as DOT and JSON and validate it.
    Graph,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Summarize { .. } => "summarize",
            Command::Eval { .. } => "eval",
            Command::Ksweep { .. } => "ksweep",
            Command::Graph => "graph",
        }
    }
}

macro_rules! value_overrides {
    ($($(#[$doc:meta])* $field:ident: $ty:ty),* $(,)?) => {
        #[derive(Debug, Default, Args)]
        pub struct ValueOverrides {
            $(
                $(#[$doc])*
                #[arg(long, global = true)]
                pub $field: Option<$ty>,
            )*
        }

        impl ValueOverrides {
            pub fn apply(&self, cfg: &mut RunConfig) {
                $(
                    if let Some(v) = &self.$field {
                        cfg.$field = v.clone().into();
                    }
                )*
            }
        }
    };
}

value_overrides! {
    /// Training or input clusters (line-delimited JSON).
    data: PathBuf,
    /// Development clusters for model selection.
    dev: PathBuf,
    /// Output directory.
    out: PathBuf,
    /// Read at most this many clusters per file.
    limit: usize,
    /// Word-vector text file.
    embeddings: PathBuf,
    embedding_dim: usize,
    /// Precomputed sentence vectors keyed by cluster:doc:sentence.
    sentence_embeddings: PathBuf,
    min_freq: usize,
    max_input_len: usize,
    /// Cosine threshold for word-similarity edges; 0 keeps every pair.
    we_threshold: f64,
    ss_threshold: f64,
    d_model: usize,
    enc_layers: usize,
    dec_layers: usize,
    heads: usize,
    ffn_dim: usize,
    /// Local attention half-width of the text encoder.
    window: usize,
    max_out_len: usize,
    dropout: f64,
    length_norm: bool,
    mgat_layers: usize,
    mgat_heads: usize,
    mgat_d_head: usize,
    leaky_slope: f64,
    mgat_residual: bool,
    /// Fraction of sentence nodes kept by the compressor.
    k: f64,
    beta: f64,
    label_smoothing: f64,
    lr: f64,
    epochs: usize,
    patience: usize,
    /// Clusters per optimizer update.
    accum: usize,
    /// Dev evaluation interval in steps; 0 evaluates once per epoch.
    eval_every: usize,
    seed: u64,
    beam_width: usize,
}

#[derive(Debug, Default, Args)]
pub struct Switches {
    /// Replace the multi-channel graph encoder by one channel over all edges.
    #[arg(long, global = true)]
    pub no_mgat: bool,
    /// Feed graph-encoder output to the decoder without compression.
    #[arg(long, global = true)]
    pub no_compressor: bool,
    /// Rescale the kept nodes' scores to mean one.
    #[arg(long, global = true)]
    pub renorm_mask: bool,
    /// Stem tokens when scoring document similarity edges.
    #[arg(long, global = true)]
    pub rouge_stem: bool,
    #[arg(long, global = true, value_parser = parse_precision)]
    pub precision: Option<Precision>,
    /// Noun detection: heuristic or external.
    #[arg(long, global = true, value_parser = parse_tagger)]
    pub tagger: Option<Tagger>,
}

impl Switches {
    pub fn apply(&self, cfg: &mut RunConfig) {
        cfg.no_mgat |= self.no_mgat;
        cfg.no_compressor |= self.no_compressor;
        cfg.renorm_mask |= self.renorm_mask;
        cfg.rouge_stem |= self.rouge_stem;
        if let Some(p) = self.precision {
            cfg.precision = p;
        }
        if let Some(t) = self.tagger {
            cfg.tagger = t;
        }
    }
}

fn parse_precision(s: &str) -> Result<Precision, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("expected single or double, got {s}"))
}

fn parse_tagger(s: &str) -> Result<Tagger, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("expected heuristic or external, got {s}"))
}

impl Cli {
    /// File values first, then flags.
    pub fn resolve(&self) -> hgsum::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        self.values.apply(&mut cfg);
        self.switches.apply(&mut cfg);
        cfg.command = Some(self.command.name().to_string());
        Ok(cfg)
    }
}
