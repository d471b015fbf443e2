use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::ops::{
    gelu, gelu_grad, layer_norm, layer_norm_backward, masked_softmax_row, softmax_backward, LayerNormCache,
};
use super::EncoderParams;
use crate::error::{Error, Result};
use crate::textmodel::TokenizedSample;
use crate::training::losses::{mlm_loss_with_grad, span_loss_with_grad};
use crate::training::QATrainExample;

struct LayerCache {
    input: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    context: Array2<f64>,
    attn_drop: Option<Array2<f64>>,
    ln1: LayerNormCache,
    mid: Array2<f64>,
    ff_pre: Array2<f64>,
    ff_act: Array2<f64>,
    ff_drop: Option<Array2<f64>>,
    ln2: LayerNormCache,
}

struct Cache {
    input_ids: Vec<usize>,
    segment_ids: Vec<usize>,
    emb_ln: LayerNormCache,
    emb_drop: Option<Array2<f64>>,
    layers: Vec<LayerCache>,
}

/// Hidden states plus per-layer, per-head attention probabilities.
pub struct ForwardOutput {
    pub hidden: Array2<f64>,
    pub attention: Vec<Vec<Array2<f64>>>,
}

fn dropout_mask(rng: &mut Option<&mut ChaCha8Rng>, shape: (usize, usize), p: f64) -> Option<Array2<f64>> {
    let rng = rng.as_mut()?;
    if p <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - p);
    Some(Array2::from_shape_fn(shape, |_| {
        if rng.random::<f64>() < p {
            0.0
        } else {
            keep
        }
    }))
}

fn check_inputs(params: &EncoderParams, ids: &[usize], segs: &[usize], mask: &[bool]) -> Result<()> {
    let cfg = &params.config;
    if ids.is_empty() {
        return Err(Error::ShapeMismatch("empty input".into()));
    }
    if ids.len() > cfg.max_len {
        return Err(Error::ShapeMismatch(format!(
            "length {} exceeds max_len {}",
            ids.len(),
            cfg.max_len
        )));
    }
    if segs.len() != ids.len() || mask.len() != ids.len() {
        return Err(Error::ShapeMismatch(format!(
            "ids {} / segments {} / mask {}",
            ids.len(),
            segs.len(),
            mask.len()
        )));
    }
    if let Some(&id) = ids.iter().find(|&&id| id >= cfg.vocab_size) {
        return Err(Error::IdOutOfRange {
            id,
            vocab_size: cfg.vocab_size,
        });
    }
    if segs.iter().any(|&s| s > 1) {
        return Err(Error::ShapeMismatch("segment ids must be 0 or 1".into()));
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::ShapeMismatch("attention mask excludes every position".into()));
    }
    Ok(())
}

fn forward_cached(
    params: &EncoderParams,
    ids: &[usize],
    segs: &[usize],
    key_mask: &[bool],
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<(Array2<f64>, Cache)> {
    check_inputs(params, ids, segs, key_mask)?;
    let cfg = &params.config;
    let (n, d, dh) = (ids.len(), cfg.d_model, cfg.head_dim());
    let scale = 1.0 / (dh as f64).sqrt();

    let mut embedded = Array2::zeros((n, d));
    for (p, mut row) in embedded.rows_mut().into_iter().enumerate() {
        row += &params.token_embedding.row(ids[p]);
        row += &params.position_embedding.row(p);
        row += &params.segment_embedding.row(segs[p]);
    }
    let (mut x, emb_ln) = layer_norm(&embedded, &params.emb_ln_gain, &params.emb_ln_bias);
    let emb_drop = dropout_mask(&mut rng, (n, d), cfg.dropout);
    if let Some(m) = &emb_drop {
        x *= m;
    }

    let mut layers = Vec::with_capacity(cfg.n_layers);
    for lp in &params.layers {
        let q = x.dot(&lp.w_q) + &lp.b_q;
        let k = x.dot(&lp.w_k) + &lp.b_k;
        let v = x.dot(&lp.w_v) + &lp.b_v;
        let mut context = Array2::zeros((n, d));
        let mut probs = Vec::with_capacity(cfg.n_heads);
        for h in 0..cfg.n_heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let mut scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
            for row in scores.rows_mut() {
                masked_softmax_row(row, key_mask);
            }
            context.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
            probs.push(scores);
        }
        let mut attn_out = context.dot(&lp.w_o) + &lp.b_o;
        let attn_drop = dropout_mask(&mut rng, (n, d), cfg.dropout);
        if let Some(m) = &attn_drop {
            attn_out *= m;
        }
        let (mid, ln1) = layer_norm(&(&x + &attn_out), &lp.ln1_gain, &lp.ln1_bias);
        let ff_pre = mid.dot(&lp.w_ff1) + &lp.b_ff1;
        let ff_act = ff_pre.mapv(gelu);
        let mut ff_out = ff_act.dot(&lp.w_ff2) + &lp.b_ff2;
        let ff_drop = dropout_mask(&mut rng, (n, d), cfg.dropout);
        if let Some(m) = &ff_drop {
            ff_out *= m;
        }
        let (out, ln2) = layer_norm(&(&mid + &ff_out), &lp.ln2_gain, &lp.ln2_bias);
        layers.push(LayerCache {
            input: std::mem::replace(&mut x, out),
            q,
            k,
            v,
            probs,
            context,
            attn_drop,
            ln1,
            mid,
            ff_pre,
            ff_act,
            ff_drop,
            ln2,
        });
    }
    let cache = Cache {
        input_ids: ids.to_vec(),
        segment_ids: segs.to_vec(),
        emb_ln,
        emb_drop,
        layers,
    };
    Ok((x, cache))
}

/// Accumulates the gradient of a scalar whose derivative w.r.t. the hidden
/// states is `grad_hidden`.
fn backward(params: &EncoderParams, cache: &Cache, grad_hidden: Array2<f64>, grads: &mut EncoderParams) {
    let cfg = &params.config;
    let dh = cfg.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let mut g = grad_hidden;
    for ((lp, c), gl) in params
        .layers
        .iter()
        .zip(&cache.layers)
        .zip(grads.layers.iter_mut())
        .rev()
    {
        let d_sum2 = layer_norm_backward(&g, &lp.ln2_gain, &c.ln2, &mut gl.ln2_gain, &mut gl.ln2_bias);
        let mut d_ff = d_sum2.clone();
        if let Some(m) = &c.ff_drop {
            d_ff *= m;
        }
        gl.w_ff2 += &c.ff_act.t().dot(&d_ff);
        gl.b_ff2 += &d_ff.sum_axis(Axis(0));
        let mut d_pre = d_ff.dot(&lp.w_ff2.t());
        d_pre.zip_mut_with(&c.ff_pre, |g, &x| *g *= gelu_grad(x));
        gl.w_ff1 += &c.mid.t().dot(&d_pre);
        gl.b_ff1 += &d_pre.sum_axis(Axis(0));
        let d_mid = d_sum2 + d_pre.dot(&lp.w_ff1.t());

        let d_sum1 = layer_norm_backward(&d_mid, &lp.ln1_gain, &c.ln1, &mut gl.ln1_gain, &mut gl.ln1_bias);
        let mut d_attn = d_sum1.clone();
        if let Some(m) = &c.attn_drop {
            d_attn *= m;
        }
        gl.w_o += &c.context.t().dot(&d_attn);
        gl.b_o += &d_attn.sum_axis(Axis(0));
        let d_context = d_attn.dot(&lp.w_o.t());

        let mut d_q = Array2::zeros(c.q.raw_dim());
        let mut d_k = Array2::zeros(c.k.raw_dim());
        let mut d_v = Array2::zeros(c.v.raw_dim());
        for (h, probs) in c.probs.iter().enumerate() {
            let cols = s![.., h * dh..(h + 1) * dh];
            let d_ctx_h = d_context.slice(cols);
            let d_probs = d_ctx_h.dot(&c.v.slice(cols).t());
            d_v.slice_mut(cols).assign(&probs.t().dot(&d_ctx_h));
            let d_scores = softmax_backward(probs.view(), d_probs.view()) * scale;
            d_q.slice_mut(cols).assign(&d_scores.dot(&c.k.slice(cols)));
            d_k.slice_mut(cols).assign(&d_scores.t().dot(&c.q.slice(cols)));
        }
        gl.w_q += &c.input.t().dot(&d_q);
        gl.b_q += &d_q.sum_axis(Axis(0));
        gl.w_k += &c.input.t().dot(&d_k);
        gl.b_k += &d_k.sum_axis(Axis(0));
        gl.w_v += &c.input.t().dot(&d_v);
        gl.b_v += &d_v.sum_axis(Axis(0));
        g = d_sum1 + d_q.dot(&lp.w_q.t()) + d_k.dot(&lp.w_k.t()) + d_v.dot(&lp.w_v.t());
    }

    if let Some(m) = &cache.emb_drop {
        g *= m;
    }
    let d_embedded = layer_norm_backward(
        &g,
        &params.emb_ln_gain,
        &cache.emb_ln,
        &mut grads.emb_ln_gain,
        &mut grads.emb_ln_bias,
    );
    for (p, row) in d_embedded.rows().into_iter().enumerate() {
        let mut tok = grads.token_embedding.row_mut(cache.input_ids[p]);
        tok += &row;
        let mut pos = grads.position_embedding.row_mut(p);
        pos += &row;
        let mut seg = grads.segment_embedding.row_mut(cache.segment_ids[p]);
        seg += &row;
    }
}

/// Hidden states (`len x d_model`) with dropout disabled. Positions whose
/// `attention_mask` entry is false are never attended to.
pub fn forward(
    params: &EncoderParams,
    input_ids: &[usize],
    segment_ids: &[usize],
    attention_mask: &[bool],
) -> Result<Array2<f64>> {
    forward_cached(params, input_ids, segment_ids, attention_mask, None).map(|(h, _)| h)
}

/// Like [`forward`] but also returns attention probabilities.
pub fn forward_detailed(
    params: &EncoderParams,
    input_ids: &[usize],
    segment_ids: &[usize],
    attention_mask: &[bool],
) -> Result<ForwardOutput> {
    let (hidden, cache) = forward_cached(params, input_ids, segment_ids, attention_mask, None)?;
    Ok(ForwardOutput {
        hidden,
        attention: cache.layers.into_iter().map(|l| l.probs).collect(),
    })
}

/// `hidden[positions] . E^T + bias` with `E` the token embedding.
pub fn mlm_logits(params: &EncoderParams, hidden: &Array2<f64>, positions: &[usize]) -> Result<Array2<f64>> {
    if let Some(&position) = positions.iter().find(|&&p| p >= hidden.nrows()) {
        return Err(Error::PositionOutOfRange {
            position,
            len: hidden.nrows(),
        });
    }
    let rows = hidden.select(Axis(0), positions);
    Ok(rows.dot(&params.token_embedding.t()) + &params.mlm_bias)
}

/// Per-position start and end logits.
pub fn qa_logits(params: &EncoderParams, hidden: &Array2<f64>) -> (Array1<f64>, Array1<f64>) {
    let logits = hidden.dot(&params.qa_weight) + &params.qa_bias;
    (logits.column(0).to_owned(), logits.column(1).to_owned())
}

/// A training batch; the variant selects the loss.
#[derive(Clone, Copy, Debug)]
pub enum Batch<'a> {
    /// Entity-completion loss over the masked positions.
    Masked(&'a [TokenizedSample]),
    /// Span start/end loss.
    Span(&'a [QATrainExample]),
}

/// Which loss a batch is trained with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossSpec {
    EntityCompletion,
    Span,
}

impl Batch<'_> {
    pub fn spec(&self) -> LossSpec {
        match self {
            Batch::Masked(_) => LossSpec::EntityCompletion,
            Batch::Span(_) => LossSpec::Span,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Batch::Masked(s) => s.len(),
            Batch::Span(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub struct LossOutput {
    pub loss: f64,
    pub grads: EncoderParams,
}

/// Unpadded prefix of a sequence. PAD only appears as a suffix, and padded
/// keys are masked out, so dropping them leaves every other hidden state
/// unchanged.
fn unpadded(ids: &[usize]) -> usize {
    ids.iter()
        .rposition(|&id| id != crate::textmodel::PAD)
        .map_or(0, |p| p + 1)
}

/// Mean loss over the batch and its exact gradient. Dropout is applied only
/// when `dropout_rng` is given.
pub fn loss_and_grad(
    params: &EncoderParams,
    batch: Batch<'_>,
    mut dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<LossOutput> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let mut grads = params.zeros_like();
    let loss = match batch {
        Batch::Masked(samples) => {
            let mut passes = Vec::with_capacity(samples.len());
            let mut logits = Vec::with_capacity(samples.len());
            let mut targets = Vec::new();
            for s in samples {
                if s.mask_positions.is_empty() {
                    return Err(Error::NoMaskedPositions);
                }
                let n = unpadded(&s.input_ids);
                let (hidden, cache) = forward_cached(
                    params,
                    &s.input_ids[..n],
                    &s.segment_ids[..n],
                    &vec![true; n],
                    dropout_rng.as_deref_mut(),
                )?;
                logits.push(mlm_logits(params, &hidden, &s.mask_positions)?);
                targets.extend_from_slice(&s.target_ids);
                passes.push((hidden, cache));
            }
            let views: Vec<_> = logits.iter().map(|l| l.view()).collect();
            let all = ndarray::concatenate(Axis(0), &views).expect("logit rows share vocab width");
            let (loss, d_logits) = mlm_loss_with_grad(all.view(), &targets)?;
            let mut offset = 0;
            for (s, (hidden, cache)) in samples.iter().zip(passes) {
                let m = s.mask_positions.len();
                let d_rows = d_logits.slice(s![offset..offset + m, ..]);
                offset += m;
                let h_rows = hidden.select(Axis(0), &s.mask_positions);
                grads.token_embedding += &d_rows.t().dot(&h_rows);
                grads.mlm_bias += &d_rows.sum_axis(Axis(0));
                let d_h_rows = d_rows.dot(&params.token_embedding);
                let mut d_hidden = Array2::zeros(hidden.raw_dim());
                for (r, &p) in s.mask_positions.iter().enumerate() {
                    let mut row = d_hidden.row_mut(p);
                    row += &d_h_rows.row(r);
                }
                backward(params, &cache, d_hidden, &mut grads);
            }
            loss
        }
        Batch::Span(examples) => {
            let inv_batch = 1.0 / examples.len() as f64;
            let mut total = 0.0;
            for ex in examples {
                let qa = &ex.qa_input;
                let n = qa.unpadded_len();
                let (hidden, cache) = forward_cached(
                    params,
                    &qa.input_ids[..n],
                    &qa.segment_ids[..n],
                    &vec![true; n],
                    dropout_rng.as_deref_mut(),
                )?;
                let (start, end) = qa_logits(params, &hidden);
                let mut valid = vec![false; n];
                for p in qa.context_positions() {
                    valid[p] = true;
                }
                let (loss, d_start, d_end) =
                    span_loss_with_grad(start.view(), end.view(), ex.gold_start, ex.gold_end, &valid)?;
                total += loss;
                let mut d_logits = Array2::zeros((n, 2));
                d_logits.column_mut(0).assign(&(d_start * inv_batch));
                d_logits.column_mut(1).assign(&(d_end * inv_batch));
                grads.qa_weight += &hidden.t().dot(&d_logits);
                grads.qa_bias += &d_logits.sum_axis(Axis(0));
                let d_hidden = d_logits.dot(&params.qa_weight.t());
                backward(params, &cache, d_hidden, &mut grads);
            }
            total / examples.len() as f64
        }
    };
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    Ok(LossOutput { loss, grads })
}

/// Loss only, dropout disabled.
pub fn loss_only(params: &EncoderParams, batch: Batch<'_>) -> Result<f64> {
    match batch {
        Batch::Masked(samples) => {
            let mut logits = Vec::new();
            let mut targets = Vec::new();
            for s in samples {
                let n = unpadded(&s.input_ids);
                let hidden = forward(params, &s.input_ids[..n], &s.segment_ids[..n], &vec![true; n])?;
                logits.push(mlm_logits(params, &hidden, &s.mask_positions)?);
                targets.extend_from_slice(&s.target_ids);
            }
            let views: Vec<_> = logits.iter().map(|l| l.view()).collect();
            let all = ndarray::concatenate(Axis(0), &views).map_err(|_| Error::Empty("batch"))?;
            crate::training::losses::ec_loss(all.view(), &targets)
        }
        Batch::Span(examples) => {
            if examples.is_empty() {
                return Err(Error::Empty("batch"));
            }
            let mut total = 0.0;
            for ex in examples {
                let qa = &ex.qa_input;
                let n = qa.unpadded_len();
                let hidden = forward(params, &qa.input_ids[..n], &qa.segment_ids[..n], &vec![true; n])?;
                let (start, end) = qa_logits(params, &hidden);
                let mut valid = vec![false; n];
                for p in qa.context_positions() {
                    valid[p] = true;
                }
                total +=
                    crate::training::losses::span_loss(start.view(), end.view(), ex.gold_start, ex.gold_end, &valid)?;
            }
            Ok(total / examples.len() as f64)
        }
    }
}
