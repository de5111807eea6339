use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{NumericError, ParamStore, Tape, Var};
use crate::Result;

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Number of scalar entries compared.
    pub checked: usize,
    /// Largest relative error per parameter.
    pub per_param: BTreeMap<String, f64>,
    /// (parameter, flat index, analytic, numeric) of the worst entry.
    pub worst: Option<(String, usize, f64, f64)>,
}

fn evaluate<F>(loss_fn: &F, params: &ParamStore) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &ParamStore) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let loss = loss_fn(&tape, params)?.item();
    if !loss.is_finite() {
        return Err(NumericError::NonFinite(format!("loss evaluated to {loss}")).into());
    }
    Ok(loss)
}

/// Compares reverse-mode gradients with central differences
/// `(L(θ+ε) − L(θ−ε)) / 2ε`. Parameters with more than `max_entries` scalars
/// are checked on a seeded random sample of `max_entries` entries. Relative
/// error is `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check<F>(
    loss_fn: F,
    params: &ParamStore,
    names: &[&str],
    epsilon: f64,
    max_entries: usize,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape, &ParamStore) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let loss = loss_fn(&tape, params)?;
    if !loss.item().is_finite() {
        return Err(NumericError::NonFinite(format!("loss evaluated to {}", loss.item())).into());
    }
    let grads = tape.backward(loss)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport::default();
    let mut work = params.clone();
    for &name in names {
        let value = params.value(name)?;
        let (size, cols) = (value.len(), value.ncols());
        let analytic = grads.param(name).cloned();
        let entries: Vec<usize> = if size <= max_entries {
            (0..size).collect()
        } else {
            rand::seq::index::sample(&mut rng, size, max_entries).into_vec()
        };
        let mut worst_here: f64 = 0.0;
        for idx in entries {
            let at = [idx / cols, idx % cols];
            let original = value[at];
            let set = |work: &mut ParamStore, x: f64| {
                work.get_mut(name).expect("param exists").value[at] = x;
            };
            set(&mut work, original + epsilon);
            let plus = evaluate(&loss_fn, &work)?;
            set(&mut work, original - epsilon);
            let minus = evaluate(&loss_fn, &work)?;
            set(&mut work, original);
            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = analytic.as_ref().map_or(0.0, |g| g[at]);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            report.checked += 1;
            worst_here = worst_here.max(rel);
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                report.worst = Some((name.to_string(), idx, a, numeric));
            }
        }
        report.per_param.insert(name.to_string(), worst_here);
    }
    Ok(report)
}
