//! Compact post-LN transformer encoder with exact manual gradients.
//!
//! Embeddings are the sum of token, learned absolute position and segment
//! embeddings followed by a layer norm. Each block is
//! `LN(x + MHA(x))` then `LN(y + FFN(y))` with a GELU feed-forward. The MLM
//! head reuses the token embedding matrix; the span head is a `d_model x 2`
//! projection giving start and end logits.

mod checkpoint;
mod model;
mod ops;

use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use model::{
    forward, forward_detailed, loss_and_grad, loss_only, mlm_logits, qa_logits, Batch, ForwardOutput, LossOutput,
    LossSpec,
};
pub use ops::{gelu, gelu_grad, log_sum_exp, LAYER_NORM_EPS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub vocab_size: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_layers: 2,
            n_heads: 4,
            d_model: 64,
            d_ff: 256,
            max_len: 384,
            vocab_size: 8000,
            dropout: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_model", self.d_model),
            ("d_ff", self.d_ff),
            ("max_len", self.max_len),
            ("vocab_size", self.vocab_size),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("model.{name} must be at least 1")));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub w_q: Array2<f64>,
    pub b_q: Array1<f64>,
    pub w_k: Array2<f64>,
    pub b_k: Array1<f64>,
    pub w_v: Array2<f64>,
    pub b_v: Array1<f64>,
    pub w_o: Array2<f64>,
    pub b_o: Array1<f64>,
    pub ln1_gain: Array1<f64>,
    pub ln1_bias: Array1<f64>,
    pub w_ff1: Array2<f64>,
    pub b_ff1: Array1<f64>,
    pub w_ff2: Array2<f64>,
    pub b_ff2: Array1<f64>,
    pub ln2_gain: Array1<f64>,
    pub ln2_bias: Array1<f64>,
}

/// Every trainable weight. The same struct doubles as a gradient buffer and
/// as optimizer moment storage.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub config: ModelConfig,
    /// `vocab_size x d_model`; also the transposed MLM output projection.
    pub token_embedding: Array2<f64>,
    pub position_embedding: Array2<f64>,
    pub segment_embedding: Array2<f64>,
    pub emb_ln_gain: Array1<f64>,
    pub emb_ln_bias: Array1<f64>,
    pub layers: Vec<LayerParams>,
    pub mlm_bias: Array1<f64>,
    /// Column 0 scores span starts, column 1 span ends.
    pub qa_weight: Array2<f64>,
    pub qa_bias: Array1<f64>,
}

const INIT_STD: f64 = 0.02;

macro_rules! collect_tensors {
    ($p:expr, $view:ident, $iter:ident) => {{
        let p = $p;
        let mut out = Vec::with_capacity(9 + 16 * p.layers.len());
        out.push(("token_embedding".to_string(), p.token_embedding.$view().into_dyn()));
        out.push((
            "position_embedding".to_string(),
            p.position_embedding.$view().into_dyn(),
        ));
        out.push(("segment_embedding".to_string(), p.segment_embedding.$view().into_dyn()));
        out.push(("emb_ln.gain".to_string(), p.emb_ln_gain.$view().into_dyn()));
        out.push(("emb_ln.bias".to_string(), p.emb_ln_bias.$view().into_dyn()));
        for (l, layer) in p.layers.$iter().enumerate() {
            let name = |s: &str| format!("layers.{l}.{s}");
            out.push((name("w_q"), layer.w_q.$view().into_dyn()));
            out.push((name("b_q"), layer.b_q.$view().into_dyn()));
            out.push((name("w_k"), layer.w_k.$view().into_dyn()));
            out.push((name("b_k"), layer.b_k.$view().into_dyn()));
            out.push((name("w_v"), layer.w_v.$view().into_dyn()));
            out.push((name("b_v"), layer.b_v.$view().into_dyn()));
            out.push((name("w_o"), layer.w_o.$view().into_dyn()));
            out.push((name("b_o"), layer.b_o.$view().into_dyn()));
            out.push((name("ln1.gain"), layer.ln1_gain.$view().into_dyn()));
            out.push((name("ln1.bias"), layer.ln1_bias.$view().into_dyn()));
            out.push((name("w_ff1"), layer.w_ff1.$view().into_dyn()));
            out.push((name("b_ff1"), layer.b_ff1.$view().into_dyn()));
            out.push((name("w_ff2"), layer.w_ff2.$view().into_dyn()));
            out.push((name("b_ff2"), layer.b_ff2.$view().into_dyn()));
            out.push((name("ln2.gain"), layer.ln2_gain.$view().into_dyn()));
            out.push((name("ln2.bias"), layer.ln2_bias.$view().into_dyn()));
        }
        out.push(("mlm_bias".to_string(), p.mlm_bias.$view().into_dyn()));
        out.push(("qa.weight".to_string(), p.qa_weight.$view().into_dyn()));
        out.push(("qa.bias".to_string(), p.qa_bias.$view().into_dyn()));
        out
    }};
}

impl EncoderParams {
    /// All-zero parameters of the given shape (gradient buffers, moments).
    pub fn zeros(config: &ModelConfig) -> Self {
        let (d, f) = (config.d_model, config.d_ff);
        let layer = || LayerParams {
            w_q: Array2::zeros((d, d)),
            b_q: Array1::zeros(d),
            w_k: Array2::zeros((d, d)),
            b_k: Array1::zeros(d),
            w_v: Array2::zeros((d, d)),
            b_v: Array1::zeros(d),
            w_o: Array2::zeros((d, d)),
            b_o: Array1::zeros(d),
            ln1_gain: Array1::zeros(d),
            ln1_bias: Array1::zeros(d),
            w_ff1: Array2::zeros((d, f)),
            b_ff1: Array1::zeros(f),
            w_ff2: Array2::zeros((f, d)),
            b_ff2: Array1::zeros(d),
            ln2_gain: Array1::zeros(d),
            ln2_bias: Array1::zeros(d),
        };
        EncoderParams {
            config: config.clone(),
            token_embedding: Array2::zeros((config.vocab_size, d)),
            position_embedding: Array2::zeros((config.max_len, d)),
            segment_embedding: Array2::zeros((2, d)),
            emb_ln_gain: Array1::zeros(d),
            emb_ln_bias: Array1::zeros(d),
            layers: (0..config.n_layers).map(|_| layer()).collect(),
            mlm_bias: Array1::zeros(config.vocab_size),
            qa_weight: Array2::zeros((d, 2)),
            qa_bias: Array1::zeros(2),
        }
    }

    /// Seeded initialization: N(0, 0.02) matrices, zero biases, unit
    /// layer-norm gains.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = Self::zeros(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        for (name, mut tensor) in params.named_tensors_mut() {
            if tensor.ndim() == 2 {
                tensor.map_inplace(|v| *v = normal.sample(&mut rng));
            } else if name.ends_with(".gain") {
                tensor.fill(1.0);
            }
        }
        Ok(params)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config)
    }

    /// Tensors in canonical order with stable names.
    pub fn named_tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        collect_tensors!(self, view, iter)
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
        collect_tensors!(self, view_mut, iter_mut)
    }

    pub fn num_parameters(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.named_tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    /// Global L2 norm over every tensor.
    pub fn l2_norm(&self) -> f64 {
        self.named_tensors()
            .iter()
            .flat_map(|(_, t)| t.iter().map(|v| v * v).collect::<Vec<_>>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, mut t) in self.named_tensors_mut() {
            t.mapv_inplace(|v| v * factor);
        }
    }

    /// Flattened copy of every coordinate, in canonical order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.named_tensors()
            .iter()
            .flat_map(|(_, t)| t.iter().copied().collect::<Vec<_>>())
            .collect()
    }

    /// Mutable reference to the `index`-th coordinate in `to_flat` order.
    pub fn coordinate_mut(&mut self, mut index: usize) -> &mut f64 {
        for (_, tensor) in self.named_tensors_mut() {
            if index < tensor.len() {
                return tensor
                    .into_slice()
                    .expect("parameters are contiguous")
                    .get_mut(index)
                    .expect("index in range");
            }
            index -= tensor.len();
        }
        panic!("coordinate out of range");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(ModelConfig::default().validate().is_ok());
        let bad_heads = ModelConfig {
            n_heads: 3,
            ..ModelConfig::default()
        };
        assert!(bad_heads.validate().is_err());
        let bad_dropout = ModelConfig {
            dropout: 1.0,
            ..ModelConfig::default()
        };
        assert!(bad_dropout.validate().is_err());
        let zero = ModelConfig {
            n_layers: 0,
            ..ModelConfig::default()
        };
        assert!(zero.validate().is_err());
    }

    #[test]
    fn init_is_seeded_and_shaped() {
        let config = ModelConfig {
            vocab_size: 32,
            max_len: 16,
            ..ModelConfig::default()
        };
        let a = EncoderParams::init(&config, 9).unwrap();
        let b = EncoderParams::init(&config, 9).unwrap();
        let c = EncoderParams::init(&config, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.layers[1].ln2_gain.sum(), 64.0);
        assert_eq!(a.layers[0].b_ff1.sum(), 0.0);
        assert_eq!(a.mlm_bias.sum(), 0.0);
        let std = (a.token_embedding.iter().map(|v| v * v).sum::<f64>() / (32.0 * 64.0)).sqrt();
        assert!((std - INIT_STD).abs() < 0.003, "std {std}");
        assert_eq!(a.num_parameters(), a.to_flat().len());
        let names: Vec<_> = a.named_tensors().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names.len(), 8 + 16 * 2);
        assert_eq!(names[5], "layers.0.w_q");
    }

    #[test]
    fn coordinate_indexing_matches_flat_order() {
        let config = ModelConfig {
            n_layers: 1,
            n_heads: 2,
            d_model: 4,
            d_ff: 8,
            max_len: 4,
            vocab_size: 6,
            dropout: 0.0,
        };
        let mut p = EncoderParams::init(&config, 1).unwrap();
        let flat = p.to_flat();
        for idx in [0, 23, 24, flat.len() - 1] {
            assert_eq!(*p.coordinate_mut(idx), flat[idx]);
        }
    }
}
