//! Ablation variants and the compression-ratio sweep.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{tokenize, DocumentCluster};
use crate::model::{prepare, summarize, ModelConfig, Prepared, Resources};
use crate::numeric::{init_params, ParamStore};
use crate::rouge::{Rouge, RougeReport};
use crate::text_model::BeamConfig;
use crate::training::{fit, mean_report, FitOutcome, LogRecord, LossBreakdown, TrainConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Full,
    /// Single-channel attention over the union of all edges.
    NoMgat,
    /// Decoder reads every refined node embedding.
    NoCompressor,
    /// Cross-entropy only (`β = 1`).
    SingleTask,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoMgat, Variant::NoCompressor, Variant::SingleTask];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoMgat => "no-mgat",
            Variant::NoCompressor => "no-compressor",
            Variant::SingleTask => "beta-1",
        }
    }

    pub fn apply(self, model: &ModelConfig, train: &TrainConfig) -> (ModelConfig, TrainConfig) {
        let (mut m, mut t) = (model.clone(), train.clone());
        match self {
            Variant::Full => {}
            Variant::NoMgat => m.mgat.multi_channel = false,
            Variant::NoCompressor => m.use_compressor = false,
            Variant::SingleTask => t.beta = 1.0,
        }
        (m, t)
    }
}

pub fn prepare_all(clusters: &[DocumentCluster], res: &Resources, model: &ModelConfig) -> Result<Vec<Prepared>> {
    clusters.par_iter().map(|c| prepare(c, res, model)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct VariantRun {
    pub variant: Variant,
    pub param_count: usize,
    pub first_step: LossBreakdown,
    /// Mean training cross-entropy over the last epoch.
    pub final_l_ce: f64,
    #[serde(skip)]
    pub params: ParamStore,
}

/// Trains one variant from a seeded initialization on `clusters`.
pub fn run_variant(
    clusters: &[DocumentCluster],
    res: &Resources,
    model: &ModelConfig,
    train: &TrainConfig,
    variant: Variant,
) -> Result<VariantRun> {
    let (m, t) = variant.apply(model, train);
    let items = prepare_all(clusters, res, &m)?;
    let params = init_params(&m.plan(), t.seed)?;
    let param_count = params.scalar_count();
    let outcome = fit(&items, &[], &res.vocab, params, &m, &t, |_| Ok(()))?;
    let steps: Vec<LossBreakdown> = step_losses(&outcome);
    let first_step = *steps.first().ok_or_else(|| Error::Config("no training steps were run".into()))?;
    let last_epoch = &steps[steps.len().saturating_sub(items.len())..];
    let final_l_ce = last_epoch.iter().map(|l| l.l_ce).sum::<f64>() / last_epoch.len() as f64;
    Ok(VariantRun { variant, param_count, first_step, final_l_ce, params: outcome.best })
}

fn step_losses(outcome: &FitOutcome) -> Vec<LossBreakdown> {
    outcome
        .log
        .iter()
        .filter_map(|r| match r {
            LogRecord::Step { l_ce, l_gs, total, .. } => Some(LossBreakdown { l_ce: *l_ce, l_gs: *l_gs, total: *total }),
            LogRecord::Dev { .. } => None,
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct KRow {
    pub k: f64,
    /// Mean generated summary length in tokens.
    pub mean_len: f64,
    pub rouge: RougeReport,
}

pub enum SweepMode<'a> {
    /// Train a fresh model per ratio.
    Retrain(&'a TrainConfig),
    /// Decode with fixed parameters at each ratio.
    Redecode(&'a ParamStore),
}

/// Generates summaries for `eval` at each ratio and scores them against the
/// references.
pub fn ksweep(
    train: &[DocumentCluster],
    eval: &[DocumentCluster],
    res: &Resources,
    model: &ModelConfig,
    ks: &[f64],
    mode: SweepMode<'_>,
    beam: &BeamConfig,
) -> Result<Vec<KRow>> {
    if ks.len() < 2 {
        return Err(Error::Config(format!("a sweep needs at least two ratios, got {}", ks.len())));
    }
    if !model.use_compressor {
        return Err(Error::Config("the ratio sweep needs the compressor enabled".into()));
    }
    let eval_items = prepare_all(eval, res, model)?;
    let train_items = match mode {
        SweepMode::Retrain(_) => prepare_all(train, res, model)?,
        SweepMode::Redecode(_) => Vec::new(),
    };
    let rouge = Rouge::default();
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let mut m = model.clone();
        m.compressor.k = k;
        m.validate()?;
        let trained;
        let params = match mode {
            SweepMode::Redecode(p) => p,
            SweepMode::Retrain(t) => {
                let init = init_params(&m.plan(), t.seed)?;
                trained = fit(&train_items, &[], &res.vocab, init, &m, t, |_| Ok(()))?.best;
                &trained
            }
        };
        let scored: Vec<(usize, Option<RougeReport>)> = eval_items
            .par_iter()
            .zip(eval)
            .map(|(item, cluster)| {
                let ids = summarize(params, &m, &item.source, beam)?;
                let candidate = tokenize(&res.vocab.decode_text(&ids));
                let report = cluster.summary.as_ref().map(|r| rouge.report(&candidate, r));
                Ok((ids.len(), report))
            })
            .collect::<Result<_>>()?;
        let mean_len = scored.iter().map(|(n, _)| *n as f64).sum::<f64>() / scored.len().max(1) as f64;
        let reports: Vec<RougeReport> = scored.into_iter().filter_map(|(_, r)| r).collect();
        rows.push(KRow { k, mean_len, rouge: mean_report(&reports) });
    }
    Ok(rows)
}

pub fn format_ktable(rows: &[KRow]) -> String {
    let mut out = String::from("k      mean_len  R-1     R-2     R-L\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<6.2} {:<9.2} {:<7.2} {:<7.2} {:.2}",
            r.k,
            r.mean_len,
            100.0 * r.rouge.rouge1.f1,
            100.0 * r.rouge.rouge2.f1,
            100.0 * r.rouge.rouge_l.f1
        );
    }
    out
}
