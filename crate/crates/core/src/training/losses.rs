//! Softmax cross-entropy losses over logits.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::encoder::log_sum_exp;
use crate::error::{Error, Result};

fn check_targets(logits: ArrayView2<f64>, targets: &[usize]) -> Result<()> {
    if logits.nrows() == 0 {
        return Err(Error::NoMaskedPositions);
    }
    if logits.nrows() != targets.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} logit rows for {} targets",
            logits.nrows(),
            targets.len()
        )));
    }
    if let Some(&id) = targets.iter().find(|&&t| t >= logits.ncols()) {
        return Err(Error::IdOutOfRange {
            id,
            vocab_size: logits.ncols(),
        });
    }
    Ok(())
}

/// Mean over rows of `-log softmax(row)[target]`.
pub fn mlm_loss(logits: ArrayView2<f64>, targets: &[usize]) -> Result<f64> {
    check_targets(logits, targets)?;
    let total: f64 = logits
        .rows()
        .into_iter()
        .zip(targets)
        .map(|(row, &t)| log_sum_exp(row) - row[t])
        .sum();
    Ok(total / targets.len() as f64)
}

/// [`mlm_loss`] and its gradient with respect to the logits.
pub fn mlm_loss_with_grad(logits: ArrayView2<f64>, targets: &[usize]) -> Result<(f64, Array2<f64>)> {
    let loss = mlm_loss(logits, targets)?;
    let inv = 1.0 / targets.len() as f64;
    let mut grad = Array2::zeros(logits.raw_dim());
    for ((row, mut g), &t) in logits.rows().into_iter().zip(grad.rows_mut()).zip(targets) {
        let lse = log_sum_exp(row);
        g.zip_mut_with(&row, |g, &z| *g = (z - lse).exp() * inv);
        g[t] -= inv;
    }
    Ok((loss, grad))
}

/// Entity-completion loss. The rows are the logits of exactly the masked
/// entity-token positions, so this is the masked-LM loss restricted to
/// entity tokens: each entity contributes the sum of its per-token
/// log-probabilities, normalized by the number of masked positions.
pub fn ec_loss(entity_logits: ArrayView2<f64>, entity_targets: &[usize]) -> Result<f64> {
    mlm_loss(entity_logits, entity_targets)
}

fn restricted_ce(logits: ArrayView1<f64>, gold: usize, valid: &[bool]) -> f64 {
    let kept: Array1<f64> = logits.iter().zip(valid).filter(|(_, &v)| v).map(|(&z, _)| z).collect();
    log_sum_exp(kept.view()) - logits[gold]
}

fn check_span(len: usize, end_len: usize, gold_start: usize, gold_end: usize, valid: &[bool]) -> Result<()> {
    if len != end_len || len != valid.len() {
        return Err(Error::ShapeMismatch(format!(
            "start {len} / end {end_len} / valid {}",
            valid.len()
        )));
    }
    for gold in [gold_start, gold_end] {
        if !valid.get(gold).copied().unwrap_or(false) {
            return Err(Error::GoldMasked(gold));
        }
    }
    Ok(())
}

/// `(CE(start | valid) + CE(end | valid)) / 2` where the softmax only runs
/// over positions with `valid[p]`.
pub fn span_loss(
    start_logits: ArrayView1<f64>,
    end_logits: ArrayView1<f64>,
    gold_start: usize,
    gold_end: usize,
    valid: &[bool],
) -> Result<f64> {
    check_span(start_logits.len(), end_logits.len(), gold_start, gold_end, valid)?;
    Ok(0.5 * (restricted_ce(start_logits, gold_start, valid) + restricted_ce(end_logits, gold_end, valid)))
}

pub fn span_loss_with_grad(
    start_logits: ArrayView1<f64>,
    end_logits: ArrayView1<f64>,
    gold_start: usize,
    gold_end: usize,
    valid: &[bool],
) -> Result<(f64, Array1<f64>, Array1<f64>)> {
    let loss = span_loss(start_logits, end_logits, gold_start, gold_end, valid)?;
    let grad = |logits: ArrayView1<f64>, gold: usize| {
        let max = logits
            .iter()
            .zip(valid)
            .filter(|(_, &v)| v)
            .map(|(&z, _)| z)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut g: Array1<f64> = logits
            .iter()
            .zip(valid)
            .map(|(&z, &v)| if v { (z - max).exp() } else { 0.0 })
            .collect();
        let sum = g.sum();
        g.mapv_inplace(|e| 0.5 * e / sum);
        g[gold] -= 0.5;
        g
    };
    Ok((loss, grad(start_logits, gold_start), grad(end_logits, gold_end)))
}
