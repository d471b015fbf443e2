#![allow(dead_code)]

use gxlt::encoder::{loss_and_grad, loss_only, Batch};
use gxlt::textmodel::{QAInput, TokenizedSample, CLS, MASK, PAD, SEP};
use gxlt::training::QATrainExample;
use gxlt::{EncoderParams, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// 1 layer, 2 heads, d_model 8, d_ff 16, vocab 16, max_len 16.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        n_layers: 1,
        n_heads: 2,
        d_model: 8,
        d_ff: 16,
        max_len: 16,
        vocab_size: 16,
        dropout: 0.0,
    }
}

/// Initialized parameters with every tensor nudged away from its init, so
/// biases and LayerNorm gains are not at symmetric points.
pub fn tiny_params(seed: u64) -> EncoderParams {
    let mut params = EncoderParams::init(&tiny_config(), seed).unwrap();
    let mut r = rng(seed ^ 0x9e37);
    for (_, mut t) in params.named_tensors_mut() {
        t.mapv_inplace(|v| v + r.random_range(-0.3..0.3));
    }
    params
}

fn word(r: &mut ChaCha8Rng, vocab: usize) -> usize {
    r.random_range(5..vocab)
}

/// Masked samples `[CLS] w.. [SEP] (w.. [SEP]) [PAD]..` with a few masks.
pub fn masked_batch(r: &mut ChaCha8Rng, n: usize, vocab: usize, max_len: usize) -> Vec<TokenizedSample> {
    (0..n)
        .map(|_| {
            let len = r.random_range(5..=max_len);
            let pad = r.random_range(0..=2).min(len - 4);
            let body = len - pad;
            let split = r.random_range(2..body - 1);
            let mut input_ids = vec![CLS];
            let mut segment_ids = vec![0];
            for p in 1..body - 1 {
                if p == split {
                    input_ids.push(SEP);
                } else {
                    input_ids.push(word(r, vocab));
                }
                segment_ids.push(usize::from(p > split));
            }
            input_ids.push(SEP);
            segment_ids.push(1);
            let candidates: Vec<usize> = (1..body - 1).filter(|&p| p != split).collect();
            let k = r.random_range(1..=candidates.len().min(3));
            let mut mask_positions: Vec<usize> = rand::seq::index::sample(r, candidates.len(), k)
                .into_iter()
                .map(|i| candidates[i])
                .collect();
            mask_positions.sort_unstable();
            let target_ids = mask_positions.iter().map(|_| word(r, vocab)).collect();
            for &p in &mask_positions {
                input_ids[p] = MASK;
            }
            input_ids.resize(len, PAD);
            segment_ids.resize(len, 0);
            TokenizedSample {
                input_ids,
                segment_ids,
                mask_positions,
                target_ids,
            }
        })
        .collect()
}

/// QA inputs `[CLS] q [SEP] c [SEP] [PAD]..` with a gold span inside `c`.
pub fn span_batch(r: &mut ChaCha8Rng, n: usize, vocab: usize, max_len: usize) -> Vec<QATrainExample> {
    (0..n)
        .map(|_| {
            let q = r.random_range(1..=3);
            let c = r.random_range(2..=max_len - q - 3);
            let mut input_ids = vec![CLS];
            input_ids.extend((0..q).map(|_| word(r, vocab)));
            input_ids.push(SEP);
            let context_start = input_ids.len();
            input_ids.extend((0..c).map(|_| word(r, vocab)));
            input_ids.push(SEP);
            let mut segment_ids = vec![0; context_start];
            segment_ids.resize(input_ids.len(), 1);
            input_ids.resize(max_len.min(input_ids.len() + r.random_range(0..=2)), PAD);
            segment_ids.resize(input_ids.len(), 0);
            let s = r.random_range(0..c);
            let e = r.random_range(s..c.min(s + 3));
            QATrainExample {
                qa_input: QAInput {
                    input_ids,
                    segment_ids,
                    context_start,
                    context_token_offsets: (0..c).map(|i| (2 * i, 2 * i + 1)).collect(),
                },
                gold_start: context_start + s,
                gold_end: context_start + e,
            }
        })
        .collect()
}

pub struct GradCheck {
    pub coordinates: usize,
    pub max_rel_error: f64,
    pub worst: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Relative error with a floor on the denominator so coordinates whose true
/// gradient is ~0 are compared absolutely.
pub fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}

/// Central differences with step `h` on every parameter coordinate.
pub fn grad_check(params: &EncoderParams, batch: Batch<'_>, h: f64) -> GradCheck {
    let analytic = loss_and_grad(params, batch, None).unwrap().grads.to_flat();
    let mut work = params.clone();
    let mut out = GradCheck {
        coordinates: analytic.len(),
        max_rel_error: 0.0,
        worst: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    for (i, &a) in analytic.iter().enumerate() {
        let orig = *work.coordinate_mut(i);
        *work.coordinate_mut(i) = orig + h;
        let plus = loss_only(&work, batch).unwrap();
        *work.coordinate_mut(i) = orig - h;
        let minus = loss_only(&work, batch).unwrap();
        *work.coordinate_mut(i) = orig;
        let n = (plus - minus) / (2.0 * h);
        let err = rel_error(a, n);
        if err > out.max_rel_error {
            out = GradCheck {
                max_rel_error: err,
                worst: i,
                analytic: a,
                numeric: n,
                ..out
            };
        }
    }
    out
}
