//! Multi-task training: label-smoothed cross-entropy on the summary plus a
//! graph-similarity loss between the compressed source graph and the summary
//! graph, mixed by `β`.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Vocab, PAD};
use crate::model::{forward_source, graph_embeddings, summarize, ModelConfig, Prepared};
use crate::numeric::{Adam, AdamConfig, Matrix, NumericError, ParamStore, Precision, Tape, Var};
use crate::rouge::{Rouge, RougeReport};
use crate::text_model::{decode_teacher_forced, memory_with_positions, BeamConfig, Ctx};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Weight of the cross-entropy term; the graph term gets `1 − β`.
    pub beta: f64,
    pub label_smoothing: f64,
    pub adam: AdamConfig,
    pub epochs: usize,
    /// Dev evaluations without improvement before stopping.
    pub patience: usize,
    /// Clusters per optimizer update.
    pub accum: usize,
    /// Optimizer updates between dev evaluations; 0 evaluates once per epoch.
    pub eval_every: usize,
    pub seed: u64,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            beta: 0.5,
            label_smoothing: 0.1,
            adam: AdamConfig::default(),
            epochs: 10,
            patience: 5,
            accum: 1,
            eval_every: 0,
            seed: 0,
            precision: Precision::Double,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Config(format!("beta {} outside [0, 1]", self.beta)));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::Config(format!("label smoothing {} outside [0, 1)", self.label_smoothing)));
        }
        if self.accum == 0 {
            return Err(Error::Config("gradient accumulation must be at least 1".into()));
        }
        if !(self.adam.lr >= 0.0 && self.adam.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} is invalid", self.adam.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_ce: f64,
    pub l_gs: f64,
    pub total: f64,
}

/// Mean smoothed negative log-likelihood; PAD targets are skipped.
pub fn cross_entropy_smoothed<'t>(logits: Var<'t>, targets: &[u32], smoothing: f64) -> Result<Var<'t>> {
    if targets.is_empty() {
        return Err(Error::Data("cross-entropy needs at least one target".into()));
    }
    let t: Vec<Option<u32>> = targets.iter().map(|&y| (y != PAD).then_some(y)).collect();
    Ok(logits.cross_entropy_smoothed(&t, smoothing)?)
}

/// `−cos(mean row of Q_p, mean row of Q′_z)`; 0 when either mean vanishes.
pub fn graph_similarity_loss<'t>(q_p: Var<'t>, q_z: Var<'t>) -> Result<Var<'t>> {
    if q_p.nrows() == 0 || q_z.nrows() == 0 {
        return Err(Error::Data("graph similarity needs non-empty node sets".into()));
    }
    let (a, b) = (q_p.mean(0)?, q_z.mean(0)?);
    let norm = |v: &Var<'_>| v.value().iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm(&a) < 1e-12 || norm(&b) < 1e-12 {
        log::warn!("graph similarity: mean node embedding has zero norm; loss set to 0");
    }
    Ok(a.cosine(&b)?.scale(-1.0))
}

/// Builds the full training loss of one prepared cluster on `tape`.
pub fn training_loss<'t, R: Rng>(
    tape: &'t Tape,
    params: &ParamStore,
    model: &ModelConfig,
    cfg: &TrainConfig,
    item: &Prepared,
    train: bool,
    rng: &mut R,
) -> Result<(Var<'t>, LossBreakdown)> {
    let target = item
        .target
        .as_ref()
        .ok_or_else(|| Error::Data(format!("cluster {} has no summary to train on", item.id)))?;
    let mut ctx = Ctx { params, cfg: &model.text, train, rng };
    let source = forward_source(tape, &mut ctx, model, &item.source)?;
    let memory = memory_with_positions(tape, params, source.rows, &source.positions)?;
    let (logits, labels) = decode_teacher_forced(tape, &mut ctx, memory, &target.ids)?;
    let l_ce = logits.cross_entropy_smoothed(&labels, cfg.label_smoothing)?;
    let q_z = graph_embeddings(tape, &mut ctx, model, &target.graph)?;
    let l_gs = graph_similarity_loss(source.rows, q_z)?;
    let total = l_ce.scale(cfg.beta).add(&l_gs.scale(1.0 - cfg.beta))?;
    let breakdown = LossBreakdown { l_ce: l_ce.item(), l_gs: l_gs.item(), total: total.item() };
    Ok((total, breakdown))
}

pub struct StepOutput {
    pub loss: LossBreakdown,
    pub grads: HashMap<String, Matrix>,
}

/// Forward and backward pass on one cluster.
pub fn train_step<R: Rng>(
    params: &ParamStore,
    model: &ModelConfig,
    cfg: &TrainConfig,
    item: &Prepared,
    rng: &mut R,
) -> Result<StepOutput> {
    let tape = Tape::new();
    let (total, loss) = training_loss(&tape, params, model, cfg, item, true, rng)?;
    if ![loss.l_ce, loss.l_gs, loss.total].iter().all(|x| x.is_finite()) {
        return Err(NumericError::NonFinite(format!(
            "loss on cluster {}: l_ce {} l_gs {} total {}",
            item.id, loss.l_ce, loss.l_gs, loss.total
        ))
        .into());
    }
    let grads = tape.backward(total)?.into_params();
    Ok(StepOutput { loss, grads })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LogRecord {
    Step {
        epoch: usize,
        step: usize,
        cluster: String,
        l_ce: f64,
        l_gs: f64,
        total: f64,
    },
    Dev {
        epoch: usize,
        step: usize,
        rouge1: f64,
        rouge2: f64,
        rouge_l: f64,
    },
}

pub struct FitOutcome {
    /// Parameters with the best dev R-L, or the final ones without a dev set.
    pub best: ParamStore,
    pub best_dev_rouge_l: Option<f64>,
    pub log: Vec<LogRecord>,
    /// Clusters processed.
    pub steps: usize,
}

/// Corpus-mean ROUGE of greedy decodes against the references.
pub fn evaluate(params: &ParamStore, model: &ModelConfig, vocab: &Vocab, items: &[Prepared], beam: &BeamConfig) -> Result<RougeReport> {
    let rouge = Rouge::default();
    let reports: Vec<RougeReport> = items
        .par_iter()
        .filter_map(|item| item.target.as_ref().map(|t| (item, t)))
        .map(|(item, target)| {
            let ids = summarize(params, model, &item.source, beam)?;
            let candidate = tokenize(&vocab.decode_text(&ids));
            Ok(rouge.report(&candidate, &target.reference))
        })
        .collect::<Result<_>>()?;
    Ok(mean_report(&reports))
}

pub fn mean_report(reports: &[RougeReport]) -> RougeReport {
    let mut mean = RougeReport::default();
    if reports.is_empty() {
        return mean;
    }
    let n = reports.len() as f64;
    for r in reports {
        for (m, x) in [
            (&mut mean.rouge1, &r.rouge1),
            (&mut mean.rouge2, &r.rouge2),
            (&mut mean.rouge_l, &r.rouge_l),
        ] {
            m.precision += x.precision / n;
            m.recall += x.recall / n;
            m.f1 += x.f1 / n;
        }
    }
    mean
}

/// Seeded epochs over `train`, with dev evaluation by greedy R-L, best
/// checkpoint selection and early stopping. `on_record` sees every log
/// record as it is produced.
pub fn fit(
    train: &[Prepared],
    dev: &[Prepared],
    vocab: &Vocab,
    mut params: ParamStore,
    model: &ModelConfig,
    cfg: &TrainConfig,
    mut on_record: impl FnMut(&LogRecord) -> Result<()>,
) -> Result<FitOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut adam = Adam::new(cfg.adam);
    let greedy = BeamConfig { width: 1, max_len: model.text.max_out_len, length_norm: model.text.length_norm };
    let mut log = Vec::new();
    let mut best: Option<(f64, ParamStore)> = None;
    let mut stale = 0;
    let mut steps = 0;
    let mut pending: HashMap<String, Matrix> = HashMap::new();
    let mut in_batch = 0;

    let mut record = |r: LogRecord, log: &mut Vec<LogRecord>| -> Result<()> {
        on_record(&r)?;
        log.push(r);
        Ok(())
    };

    'epochs: for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut order_rng);
        for (pos, &i) in order.iter().enumerate() {
            let out = train_step(&params, model, cfg, &train[i], &mut dropout_rng)?;
            steps += 1;
            record(
                LogRecord::Step {
                    epoch,
                    step: steps,
                    cluster: train[i].id.clone(),
                    l_ce: out.loss.l_ce,
                    l_gs: out.loss.l_gs,
                    total: out.loss.total,
                },
                &mut log,
            )?;
            for (name, g) in out.grads {
                match pending.get_mut(&name) {
                    Some(acc) => *acc += &g,
                    None => {
                        pending.insert(name, g);
                    }
                }
            }
            in_batch += 1;
            let epoch_end = pos + 1 == order.len();
            if in_batch < cfg.accum && !epoch_end {
                continue;
            }
            let scale = 1.0 / in_batch as f64;
            let grads: HashMap<String, Matrix> = pending.drain().map(|(k, g)| (k, g * scale)).collect();
            in_batch = 0;
            adam.step(&mut params, &grads, cfg.precision)?;

            let due = if cfg.eval_every == 0 {
                epoch_end
            } else {
                adam.steps_taken().is_multiple_of(cfg.eval_every as u64)
            };
            if dev.is_empty() || !due {
                continue;
            }
            let report = evaluate(&params, model, vocab, dev, &greedy)?;
            record(
                LogRecord::Dev {
                    epoch,
                    step: steps,
                    rouge1: report.rouge1.f1,
                    rouge2: report.rouge2.f1,
                    rouge_l: report.rouge_l.f1,
                },
                &mut log,
            )?;
            if best.as_ref().is_none_or(|(b, _)| report.rouge_l.f1 > *b) {
                best = Some((report.rouge_l.f1, params.clone()));
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    log::info!("early stop after {stale} dev evaluations without improvement");
                    break 'epochs;
                }
            }
        }
    }
    let (best_dev_rouge_l, best) = match best {
        Some((score, p)) => (Some(score), p),
        None => (None, params),
    };
    Ok(FitOutcome { best, best_dev_rouge_l, log, steps })
}
