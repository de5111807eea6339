use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamConfig {
    pub width: usize,
    pub max_len: usize,
    /// Rank finished hypotheses by mean log-probability per token.
    pub length_norm: bool,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig { width: 5, max_len: 512, length_norm: true }
    }
}

fn final_score(cfg: &BeamConfig, log_prob: f64, len: usize) -> f64 {
    if cfg.length_norm && len > 0 {
        log_prob / len as f64
    } else {
        log_prob
    }
}

/// Beam search over a next-token scorer. `step(prefix)` gets the sequence so
/// far (starting with `bos`) and returns log-probabilities over the
/// vocabulary. Each step keeps the `width` best expansions by total
/// log-probability; those ending in `eos` are set aside as finished. Live
/// hypotheses still standing at `max_len` count as finished. Returns the
/// generated tokens without `bos`.
pub fn beam_search<F>(cfg: &BeamConfig, bos: u32, eos: u32, mut step: F) -> Result<Vec<u32>>
where
    F: FnMut(&[u32]) -> Result<Vec<f64>>,
{
    if cfg.width == 0 || cfg.max_len == 0 {
        return Err(Error::Config("beam width and length must be positive".into()));
    }
    let mut live: Vec<(Vec<u32>, f64)> = vec![(vec![bos], 0.0)];
    let mut finished: Vec<(Vec<u32>, f64)> = Vec::new();
    for _ in 0..cfg.max_len {
        let mut expansions = Vec::new();
        for (seq, lp) in &live {
            let scores = step(seq)?;
            for (tok, s) in scores.iter().enumerate() {
                if s.is_nan() {
                    return Err(Error::Numeric(crate::numeric::NumericError::NonFinite(
                        "beam step produced NaN".into(),
                    )));
                }
                expansions.push((seq.clone(), tok as u32, lp + s));
            }
        }
        // stable: ties keep earlier hypotheses and lower token ids first
        expansions.sort_by(|a, b| b.2.total_cmp(&a.2));
        expansions.truncate(cfg.width);
        live.clear();
        for (mut seq, tok, lp) in expansions {
            seq.push(tok);
            if tok == eos {
                finished.push((seq, lp));
            } else {
                live.push((seq, lp));
            }
        }
        if live.is_empty() {
            break;
        }
    }
    finished.extend(live);
    let mut best: Option<(f64, Vec<u32>)> = None;
    for (seq, lp) in finished {
        let s = final_score(cfg, lp, seq.len() - 1);
        if best.as_ref().is_none_or(|(b, _)| s > *b) {
            best = Some((s, seq));
        }
    }
    Ok(best.map(|(_, seq)| seq[1..].to_vec()).unwrap_or_default())
}

/// Arg-max decoding; the lowest token id wins ties.
pub fn greedy_search<F>(bos: u32, eos: u32, max_len: usize, mut step: F) -> Result<Vec<u32>>
where
    F: FnMut(&[u32]) -> Result<Vec<f64>>,
{
    let mut seq = vec![bos];
    for _ in 0..max_len {
        let scores = step(&seq)?;
        let mut best = 0;
        for (k, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = k;
            }
        }
        seq.push(best as u32);
        if best as u32 == eos {
            break;
        }
    }
    Ok(seq[1..].to_vec())
}
