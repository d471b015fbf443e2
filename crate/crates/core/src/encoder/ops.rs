//! Row-wise kernels shared by the forward and backward passes.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, Axis, Zip};

pub const LAYER_NORM_EPS: f64 = 1e-12;

pub struct LayerNormCache {
    pub normalized: Array2<f64>,
    pub inv_std: Array1<f64>,
}

pub fn layer_norm(x: &Array2<f64>, gain: &Array1<f64>, bias: &Array1<f64>) -> (Array2<f64>, LayerNormCache) {
    let width = x.ncols() as f64;
    let mut normalized = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, inv) in normalized.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / width;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / width;
        *inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        let s = *inv;
        row.mapv_inplace(|v| v * s);
    }
    let out = &normalized * gain + bias;
    (out, LayerNormCache { normalized, inv_std })
}

/// Returns the input gradient and accumulates gain/bias gradients.
pub fn layer_norm_backward(
    grad_out: &Array2<f64>,
    gain: &Array1<f64>,
    cache: &LayerNormCache,
    grad_gain: &mut Array1<f64>,
    grad_bias: &mut Array1<f64>,
) -> Array2<f64> {
    *grad_gain += &(grad_out * &cache.normalized).sum_axis(Axis(0));
    *grad_bias += &grad_out.sum_axis(Axis(0));
    let width = grad_out.ncols() as f64;
    let mut grad_in = grad_out * gain;
    for ((mut g, xhat), &inv) in grad_in
        .rows_mut()
        .into_iter()
        .zip(cache.normalized.rows())
        .zip(cache.inv_std.iter())
    {
        let sum_g = g.sum();
        let sum_gx = g.dot(&xhat);
        Zip::from(&mut g).and(&xhat).for_each(|gv, &xv| {
            *gv = inv * (*gv - sum_g / width - xv * sum_gx / width);
        });
    }
    grad_in
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Softmax of one row over the entries where `keep` is true; the rest get
/// probability zero.
pub fn masked_softmax_row(mut row: ArrayViewMut1<f64>, keep: &[bool]) {
    let max = row
        .iter()
        .zip(keep)
        .filter(|(_, &k)| k)
        .map(|(&v, _)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (v, &k) in row.iter_mut().zip(keep) {
        *v = if k { (*v - max).exp() } else { 0.0 };
        sum += *v;
    }
    row.mapv_inplace(|v| v / sum);
}

/// Backward of a row softmax: `ds = p * (dp - <dp, p>)`.
pub fn softmax_backward(probs: ArrayView2<f64>, grad_probs: ArrayView2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(probs.raw_dim());
    for ((p, dp), mut o) in probs.rows().into_iter().zip(grad_probs.rows()).zip(out.rows_mut()) {
        let inner = p.dot(&dp);
        Zip::from(&mut o)
            .and(&p)
            .and(&dp)
            .for_each(|o, &p, &dp| *o = p * (dp - inner));
    }
    out
}

/// `log(sum(exp(row)))`, stable.
pub fn log_sum_exp(row: ArrayView1<f64>) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
