use ndarray::Array2;
use rand::Rng;

use super::{feed_forward, layer_norm, multi_head_attention, Ctx};
use crate::corpus::{DOC_SEP, SENT_SEP};
use crate::numeric::{Matrix, Tape, Var};
use crate::{Error, Result};

/// `blocked[i][j]` is true when position i may not attend to position j.
/// Pairs within the window are allowed, and delimiter positions attend to
/// and are attended by everything.
pub fn encoder_mask(ids: &[u32], window: usize) -> Array2<bool> {
    let n = ids.len();
    let global: Vec<bool> = ids.iter().map(|&t| t == DOC_SEP || t == SENT_SEP).collect();
    Array2::from_shape_fn((n, n), |(i, j)| !(i.abs_diff(j) <= window || global[i] || global[j]))
}

pub struct EncoderOutput<'t> {
    /// One row per input position.
    pub q: Var<'t>,
    /// Attention weights indexed `[layer][head]`, present when traced.
    pub attention: Vec<Vec<Matrix>>,
}

pub fn encode_text<'t, R: Rng>(tape: &'t Tape, ctx: &mut Ctx<'_, R>, ids: &[u32]) -> Result<Var<'t>> {
    Ok(encode(tape, ctx, ids, false)?.q)
}

pub fn encode_text_traced<'t, R: Rng>(tape: &'t Tape, ctx: &mut Ctx<'_, R>, ids: &[u32]) -> Result<EncoderOutput<'t>> {
    encode(tape, ctx, ids, true)
}

fn encode<'t, R: Rng>(tape: &'t Tape, ctx: &mut Ctx<'_, R>, ids: &[u32], trace: bool) -> Result<EncoderOutput<'t>> {
    let cfg = ctx.cfg;
    if ids.is_empty() {
        return Err(Error::Data("cannot encode an empty input".into()));
    }
    if ids.len() > cfg.max_input_len {
        return Err(Error::Data(format!(
            "input of {} tokens exceeds the encoder limit of {}",
            ids.len(),
            cfg.max_input_len
        )));
    }
    if let Some(&bad) = ids.iter().find(|&&t| t as usize >= cfg.vocab_size) {
        return Err(Error::Data(format!("token id {bad} outside vocabulary of {}", cfg.vocab_size)));
    }
    let positions: Vec<usize> = (0..ids.len()).collect();
    let tok = tape.param(ctx.params, "embed.tok")?.embedding(ids)?;
    let pos = tape.param(ctx.params, "enc.pos")?.gather_rows(&positions)?;
    let mut x = ctx.dropout(tok.add(&pos)?);
    let mask = encoder_mask(ids, cfg.attention_window);
    let mut attention = Vec::new();
    for l in 0..cfg.n_layers_enc {
        let p = format!("enc.l{l}");
        let (a, probs) = multi_head_attention(tape, ctx.params, &format!("{p}.attn"), cfg.n_heads, x, x, Some(&mask))?;
        if trace {
            attention.push(probs.iter().map(|v| v.value().clone()).collect());
        }
        x = layer_norm(tape, ctx.params, &format!("{p}.ln1"), x.add(&ctx.dropout(a))?)?;
        let f = feed_forward(tape, ctx.params, &format!("{p}.ffn"), x)?;
        x = layer_norm(tape, ctx.params, &format!("{p}.ln2"), x.add(&ctx.dropout(f))?)?;
    }
    Ok(EncoderOutput { q: x, attention })
}
