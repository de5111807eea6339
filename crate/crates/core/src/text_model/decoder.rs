use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use super::{beam_search, feed_forward, greedy_search, layer_norm, multi_head_attention, BeamConfig, Ctx, TextModelConfig};
use crate::corpus::{BOS, EOS};
use crate::numeric::{log_softmax_rows, Matrix, ParamStore, Tape, Var};
use crate::{Error, Result};

/// Decoder memory: node rows plus the encoder positional embedding of each
/// node's token position.
pub fn memory_with_positions<'t>(
    tape: &'t Tape,
    params: &ParamStore,
    rows: Var<'t>,
    positions: &[usize],
) -> Result<Var<'t>> {
    let pos = tape.param(params, "enc.pos")?.gather_rows(positions)?;
    Ok(rows.add(&pos)?)
}

/// Detached memory for inference.
pub fn memory_matrix(params: &ParamStore, rows: &Matrix, positions: &[usize]) -> Result<Matrix> {
    let tape = Tape::new();
    let m = memory_with_positions(&tape, params, tape.constant(rows.clone()), positions)?;
    let value = m.value().clone();
    Ok(value)
}

fn decode_forward<'t, R: Rng>(tape: &'t Tape, ctx: &mut Ctx<'_, R>, memory: Var<'t>, input: &[u32]) -> Result<Var<'t>> {
    let cfg = ctx.cfg;
    let t = input.len();
    if t == 0 || t > cfg.max_out_len + 1 {
        return Err(Error::Data(format!(
            "decoder input of {t} tokens outside 1..={}",
            cfg.max_out_len + 1
        )));
    }
    let positions: Vec<usize> = (0..t).collect();
    let tok = tape.param(ctx.params, "embed.tok")?.embedding(input)?;
    let pos = tape.param(ctx.params, "dec.pos")?.gather_rows(&positions)?;
    let mut x = ctx.dropout(tok.add(&pos)?);
    let causal = Array2::from_shape_fn((t, t), |(i, j)| j > i);
    for l in 0..cfg.n_layers_dec {
        let p = format!("dec.l{l}");
        let (a, _) = multi_head_attention(tape, ctx.params, &format!("{p}.self"), cfg.n_heads, x, x, Some(&causal))?;
        x = layer_norm(tape, ctx.params, &format!("{p}.ln1"), x.add(&ctx.dropout(a))?)?;
        let (c, _) = multi_head_attention(tape, ctx.params, &format!("{p}.cross"), cfg.n_heads, x, memory, None)?;
        x = layer_norm(tape, ctx.params, &format!("{p}.ln2"), x.add(&ctx.dropout(c))?)?;
        let f = feed_forward(tape, ctx.params, &format!("{p}.ffn"), x)?;
        x = layer_norm(tape, ctx.params, &format!("{p}.ln3"), x.add(&ctx.dropout(f))?)?;
    }
    let w = tape.param(ctx.params, "dec.out.w")?;
    let b = tape.param(ctx.params, "dec.out.b")?;
    Ok(x.matmul(&w)?.add_row(&b)?)
}

/// Logits for `[BOS] + summary` and the matching labels `summary + [EOS]`.
/// The summary is truncated to the configured output length.
pub fn decode_teacher_forced<'t, R: Rng>(
    tape: &'t Tape,
    ctx: &mut Ctx<'_, R>,
    memory: Var<'t>,
    summary: &[u32],
) -> Result<(Var<'t>, Vec<Option<u32>>)> {
    let z = &summary[..summary.len().min(ctx.cfg.max_out_len)];
    let mut input = Vec::with_capacity(z.len() + 1);
    input.push(BOS);
    input.extend_from_slice(z);
    let labels: Vec<Option<u32>> = z.iter().copied().chain([EOS]).map(Some).collect();
    Ok((decode_forward(tape, ctx, memory, &input)?, labels))
}

fn next_token_log_probs(params: &ParamStore, cfg: &TextModelConfig, memory: &Matrix, prefix: &[u32]) -> Result<Vec<f64>> {
    let tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut ctx = Ctx { params, cfg, train: false, rng: &mut rng };
    let logits = decode_forward(&tape, &mut ctx, tape.constant(memory.clone()), prefix)?;
    let value = logits.value();
    let last = value.slice(ndarray::s![value.nrows() - 1..value.nrows(), ..]);
    Ok(log_softmax_rows(last).into_iter().collect())
}

fn check_len(cfg: &TextModelConfig, max_len: usize) -> Result<()> {
    if max_len == 0 || max_len > cfg.max_out_len {
        return Err(Error::Config(format!(
            "decode length {max_len} outside 1..={}",
            cfg.max_out_len
        )));
    }
    Ok(())
}

/// Greedy decoding; the result includes EOS if it was produced.
pub fn decode_greedy(params: &ParamStore, cfg: &TextModelConfig, memory: &Matrix, max_len: usize) -> Result<Vec<u32>> {
    check_len(cfg, max_len)?;
    greedy_search(BOS, EOS, max_len, |prefix| next_token_log_probs(params, cfg, memory, prefix))
}

pub fn decode_beam(params: &ParamStore, cfg: &TextModelConfig, memory: &Matrix, beam: &BeamConfig) -> Result<Vec<u32>> {
    check_len(cfg, beam.max_len)?;
    beam_search(beam, BOS, EOS, |prefix| next_token_log_probs(params, cfg, memory, prefix))
}
