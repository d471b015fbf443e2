//! Knowledge injection and QA finetuning loops.

pub mod losses;
pub mod optim;
pub mod schedule;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assembler::MaskedSample;
use crate::encoder::{loss_and_grad, Batch, EncoderParams, ModelConfig};
use crate::error::{Error, Result};
use crate::evaluation::QAExample;
use crate::rng::derive_seed;
use crate::textmodel::{pack_qa, render, QAInput, TokenizedSample, Vocab};

pub use losses::{ec_loss, mlm_loss, mlm_loss_with_grad, span_loss, span_loss_with_grad};
pub use optim::{adamw_step, adamw_update, clip_grad_norm, AdamState, AdamWConfig};
pub use schedule::{lr_at, lr_with_decay, warmup_steps, LrDecay};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Phase {
    Inject,
    Finetune,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub phase: Phase,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub warmup_fraction: f64,
    pub weight_decay: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_grad_norm: Option<f64>,
    #[serde(default)]
    pub lr_decay: LrDecay,
}

impl TrainConfig {
    pub fn inject() -> Self {
        TrainConfig {
            phase: Phase::Inject,
            learning_rate: 2e-5,
            batch_size: 24,
            epochs: 1,
            warmup_fraction: 0.06,
            weight_decay: 0.01,
            seed: 0,
            max_grad_norm: None,
            lr_decay: LrDecay::Constant,
        }
    }

    pub fn finetune() -> Self {
        TrainConfig {
            phase: Phase::Finetune,
            learning_rate: 3e-5,
            batch_size: 16,
            epochs: 2,
            ..TrainConfig::inject()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("{:?} config: {what}", self.phase)));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return bad("warmup_fraction must be in [0, 1)");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        if matches!(self.max_grad_norm, Some(n) if n.is_nan() || n <= 0.0) {
            return bad("max_grad_norm must be positive");
        }
        Ok(())
    }

    pub fn total_steps(&self, n_examples: usize) -> usize {
        self.epochs * n_examples.div_ceil(self.batch_size)
    }

    fn optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        }
    }
}

/// A packed QA input with its gold span as absolute sequence positions
/// inside the context segment.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QATrainExample {
    pub qa_input: QAInput,
    pub gold_start: usize,
    pub gold_end: usize,
}

/// One line of the training log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: EncoderParams,
    pub log: Vec<StepRecord>,
    /// Inputs skipped because they did not fit or could not be located.
    pub dropped: usize,
}

/// Maps a char span of the context to context-token indices: the first
/// token whose range covers `start`, the last covering `start + len - 1`.
/// Tokens cut by truncation are not in `offsets`, so such answers yield
/// `None`.
pub fn locate_answer(offsets: &[(usize, usize)], start: usize, len: usize) -> Option<(usize, usize)> {
    if len == 0 {
        return None;
    }
    let last = start + len - 1;
    let first_tok = offsets.iter().position(|&(s, e)| e > start && s <= last)?;
    let last_tok = offsets.iter().rposition(|&(s, e)| s <= last && e > start)?;
    Some((first_tok, last_tok))
}

/// Packs QA examples and converts their first gold answer to a token span.
/// Returns the usable examples and how many were dropped.
pub fn build_train_examples(
    examples: &[QAExample],
    vocab: &Vocab,
    max_len: usize,
) -> Result<(Vec<QATrainExample>, usize)> {
    let mut out = Vec::with_capacity(examples.len());
    let mut dropped = 0;
    for ex in examples {
        let answer = &ex.answers[0];
        if !answer.matches(&ex.context) {
            dropped += 1;
            continue;
        }
        let qa_input = pack_qa(&ex.question, &ex.context, vocab, max_len)?;
        match locate_answer(
            &qa_input.context_token_offsets,
            answer.answer_start,
            answer.text.chars().count(),
        ) {
            Some((s, e)) => out.push(QATrainExample {
                gold_start: qa_input.context_start + s,
                gold_end: qa_input.context_start + e,
                qa_input,
            }),
            None => dropped += 1,
        }
    }
    Ok((out, dropped))
}

trait Example: Clone {
    fn batch(items: &[Self]) -> Batch<'_>;
}

impl Example for TokenizedSample {
    fn batch(items: &[Self]) -> Batch<'_> {
        Batch::Masked(items)
    }
}

impl Example for QATrainExample {
    fn batch(items: &[Self]) -> Batch<'_> {
        Batch::Span(items)
    }
}

fn train_loop<T: Example>(
    mut params: EncoderParams,
    items: &[T],
    config: &TrainConfig,
) -> Result<(EncoderParams, Vec<StepRecord>)> {
    let total = config.total_steps(items.len());
    let optimizer = config.optimizer();
    let mut state = AdamState::new(&params);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "train/dropout", 0));
    let use_dropout = params.config.dropout > 0.0;
    let mut log = Vec::with_capacity(total);
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut batch = Vec::with_capacity(config.batch_size);
    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "train/shuffle", epoch as u64));
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let step = log.len() + 1;
            batch.clear();
            batch.extend(chunk.iter().map(|&i| items[i].clone()));
            let rng = use_dropout.then_some(&mut dropout_rng);
            let mut out = match loss_and_grad(&params, T::batch(&batch), rng) {
                Err(Error::NonFinite(_)) => return Err(Error::Divergence { step, loss: f64::NAN }),
                other => other?,
            };
            if !out.loss.is_finite() {
                return Err(Error::Divergence { step, loss: out.loss });
            }
            if let Some(max_norm) = config.max_grad_norm {
                clip_grad_norm(&mut out.grads, max_norm);
            }
            let lr = lr_with_decay(
                step,
                total,
                config.learning_rate,
                config.warmup_fraction,
                config.lr_decay,
            );
            adamw_step(&mut params, &out.grads, &mut state, lr, &optimizer)?;
            log.push(StepRecord {
                step,
                lr,
                loss: out.loss,
            });
        }
    }
    Ok((params, log))
}

/// Trains on the masked corpus with the entity-completion loss, starting
/// from `init` or from a fresh seeded initialization.
pub fn run_injection(
    corpus: &[MaskedSample],
    vocab: &Vocab,
    config: &TrainConfig,
    model_config: &ModelConfig,
    init: Option<EncoderParams>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    if vocab.len() > model_config.vocab_size {
        return Err(Error::Config(format!(
            "vocab has {} tokens but the model only {}",
            vocab.len(),
            model_config.vocab_size
        )));
    }
    let params = match init {
        Some(p) => p,
        None => EncoderParams::init(model_config, derive_seed(config.seed, "train/init", 0))?,
    };
    let mut samples = Vec::with_capacity(corpus.len());
    let mut dropped = 0;
    for sample in corpus {
        match render(sample, vocab, model_config.max_len) {
            Ok(t) => samples.push(t),
            Err(Error::Overflow { .. }) => dropped += 1,
            Err(e) => return Err(e),
        }
    }
    if samples.is_empty() {
        return Err(Error::Empty("corpus after rendering"));
    }
    let (params, log) = train_loop(params, &samples, config)?;
    Ok(TrainOutcome { params, log, dropped })
}

/// Finetunes span prediction on QA examples.
pub fn run_finetune(
    params: EncoderParams,
    dataset: &[QAExample],
    vocab: &Vocab,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty("QA dataset"));
    }
    let (examples, dropped) = build_train_examples(dataset, vocab, params.config.max_len)?;
    if examples.is_empty() {
        return Err(Error::Empty("QA dataset after locating answers"));
    }
    let (params, log) = train_loop(params, &examples, config)?;
    Ok(TrainOutcome { params, log, dropped })
}
