//! Serializable run configuration. Files may be TOML or JSON; unknown keys
//! are rejected. Every field has a default, so a file only lists what it
//! changes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::compressor::CompressorConfig;
use crate::corpus::{DocumentCluster, Vocab, DEFAULT_MAX_INPUT_LEN};
use crate::embeddings::{load_static_embeddings, EmbeddingTable, SentenceEmbedder};
use crate::hetgraph::{GraphConfig, Tagger};
use crate::mgat::MgatConfig;
use crate::model::{ModelConfig, Resources};
use crate::numeric::{AdamConfig, Precision};
use crate::text_model::{BeamConfig, TextModelConfig};
use crate::training::TrainConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, rename_all = "kebab-case")]
pub struct RunConfig {
    pub command: Option<String>,
    pub data: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Read at most this many clusters from each data file.
    pub limit: Option<usize>,

    pub embeddings: Option<PathBuf>,
    pub embedding_dim: usize,
    pub sentence_embeddings: Option<PathBuf>,
    pub min_freq: usize,
    pub max_input_len: usize,

    pub we_threshold: f64,
    pub ss_threshold: Option<f64>,
    pub tagger: Tagger,
    pub rouge_stem: bool,

    pub d_model: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub window: usize,
    pub max_out_len: usize,
    pub dropout: f64,
    pub length_norm: bool,

    pub mgat_layers: usize,
    pub mgat_heads: usize,
    pub mgat_d_head: usize,
    pub leaky_slope: f64,
    pub mgat_residual: bool,
    pub no_mgat: bool,

    pub k: f64,
    pub renorm_mask: bool,
    pub no_compressor: bool,

    pub beta: f64,
    pub label_smoothing: f64,
    pub lr: f64,
    pub epochs: usize,
    pub patience: usize,
    pub accum: usize,
    pub eval_every: usize,
    pub seed: u64,
    pub precision: Precision,

    pub beam_width: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let text = TextModelConfig::default();
        let mgat = MgatConfig::default();
        let graph = GraphConfig::default();
        let train = TrainConfig::default();
        RunConfig {
            command: None,
            data: None,
            dev: None,
            out: None,
            limit: None,
            embeddings: None,
            embedding_dim: 100,
            sentence_embeddings: None,
            min_freq: 2,
            max_input_len: DEFAULT_MAX_INPUT_LEN,
            we_threshold: graph.we_threshold,
            ss_threshold: graph.ss_threshold,
            tagger: graph.tagger,
            rouge_stem: graph.rouge_stem,
            d_model: text.d_model,
            enc_layers: text.n_layers_enc,
            dec_layers: text.n_layers_dec,
            heads: text.n_heads,
            ffn_dim: text.ffn_dim,
            window: text.attention_window,
            max_out_len: text.max_out_len,
            dropout: text.dropout,
            length_norm: text.length_norm,
            mgat_layers: mgat.n_layers,
            mgat_heads: mgat.n_heads,
            mgat_d_head: mgat.d_head,
            leaky_slope: mgat.leaky_slope,
            mgat_residual: mgat.residual,
            no_mgat: false,
            k: CompressorConfig::default().k,
            renorm_mask: false,
            no_compressor: false,
            beta: train.beta,
            label_smoothing: train.label_smoothing,
            lr: train.adam.lr,
            epochs: train.epochs,
            patience: train.patience,
            accum: train.accum,
            eval_every: train.eval_every,
            seed: train.seed,
            precision: train.precision,
            beam_width: BeamConfig::default().width,
        }
    }
}

impl RunConfig {
    /// Reads a `.toml` or `.json` file, chosen by extension.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parsed = match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&text).map_err(|e| e.to_string()),
            Some("json") => serde_json::from_str(&text).map_err(|e| e.to_string()),
            _ => return Err(Error::Config(format!("{}: expected a .toml or .json file", path.display()))),
        };
        parsed.map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn model_config(&self, vocab_size: usize) -> Result<ModelConfig> {
        let cfg = ModelConfig {
            text: TextModelConfig {
                vocab_size,
                d_model: self.d_model,
                n_layers_enc: self.enc_layers,
                n_layers_dec: self.dec_layers,
                n_heads: self.heads,
                ffn_dim: self.ffn_dim,
                attention_window: self.window,
                max_input_len: self.max_input_len,
                max_out_len: self.max_out_len,
                dropout: self.dropout,
                length_norm: self.length_norm,
            },
            mgat: MgatConfig {
                n_layers: self.mgat_layers,
                n_heads: self.mgat_heads,
                d_head: self.mgat_d_head,
                leaky_slope: self.leaky_slope,
                residual: self.mgat_residual,
                multi_channel: !self.no_mgat,
            },
            compressor: CompressorConfig { k: self.k, renorm_mask: self.renorm_mask },
            use_compressor: !self.no_compressor,
            graph: GraphConfig {
                we_threshold: self.we_threshold,
                ss_threshold: self.ss_threshold,
                tagger: self.tagger,
                rouge_stem: self.rouge_stem,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            beta: self.beta,
            label_smoothing: self.label_smoothing,
            adam: AdamConfig { lr: self.lr, ..AdamConfig::default() },
            epochs: self.epochs,
            patience: self.patience,
            accum: self.accum,
            eval_every: self.eval_every,
            seed: self.seed,
            precision: self.precision,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn beam(&self) -> Result<BeamConfig> {
        if self.beam_width == 0 {
            return Err(Error::Config("beam width must be at least 1".into()));
        }
        Ok(BeamConfig { width: self.beam_width, max_len: self.max_out_len, length_norm: self.length_norm })
    }

    /// Word vectors from `embeddings`, or seeded hash vectors over the
    /// vocabulary when no file is given.
    pub fn resources(&self, vocab: Vocab) -> Result<Resources> {
        let table = match &self.embeddings {
            Some(path) => load_static_embeddings(path, self.embedding_dim)?,
            None => {
                log::warn!(
                    "no word vectors given; using {}-dimensional hash vectors seeded from the run seed",
                    self.embedding_dim
                );
                EmbeddingTable::hashed(vocab.words().iter().map(String::as_str), self.embedding_dim, self.seed)?
            }
        };
        let embedder = match &self.sentence_embeddings {
            Some(path) => SentenceEmbedder::load_precomputed(path)?,
            None => SentenceEmbedder::MeanOfWords,
        };
        Ok(Resources { vocab, table, embedder })
    }

    /// Builds the vocabulary of a training set with the configured cut-off.
    pub fn vocab_for(&self, clusters: &[DocumentCluster]) -> Vocab {
        crate::corpus::build_vocab(clusters, self.min_freq)
    }
}
