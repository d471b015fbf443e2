use serde::{Deserialize, Serialize};

use super::tokenizer::{tokenize, tokenize_with_offsets};
use super::vocab::{Vocab, CLS, MASK, PAD, SEP};
use crate::assembler::{MaskedSample, SampleKind};
use crate::error::{Error, Result};

/// A masked sample as token ids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedSample {
    pub input_ids: Vec<usize>,
    pub segment_ids: Vec<usize>,
    pub mask_positions: Vec<usize>,
    pub target_ids: Vec<usize>,
}

/// Renders a masked sample as `[CLS] block_i [SEP] (block_j [SEP])`.
///
/// A masked piece becomes one `[MASK]` per token of its target text. K3
/// samples put their second block in segment 1.
pub fn render(sample: &MaskedSample, vocab: &Vocab, max_len: usize) -> Result<TokenizedSample> {
    let mut out = TokenizedSample {
        input_ids: vec![CLS],
        segment_ids: vec![0],
        mask_positions: Vec::new(),
        target_ids: Vec::new(),
    };
    let split = if sample.kind == SampleKind::K3 {
        3
    } else {
        sample.pieces.len()
    };
    for (idx, piece) in sample.pieces.iter().enumerate() {
        if idx == split {
            out.input_ids.push(SEP);
            out.segment_ids.push(0);
        }
        let segment = usize::from(idx >= split);
        for tok in tokenize(&piece.text) {
            let id = vocab.id(&tok);
            if piece.masked {
                out.mask_positions.push(out.input_ids.len());
                out.target_ids.push(id);
                out.input_ids.push(MASK);
            } else {
                out.input_ids.push(id);
            }
            out.segment_ids.push(segment);
        }
    }
    out.input_ids.push(SEP);
    out.segment_ids.push(usize::from(split < sample.pieces.len()));
    if out.input_ids.len() > max_len {
        return Err(Error::Overflow {
            len: out.input_ids.len(),
            max_len,
        });
    }
    if out.mask_positions.is_empty() {
        return Err(Error::NoMaskedPositions);
    }
    Ok(out)
}

/// Question and context packed as `[CLS] q [SEP] c [SEP] [PAD]*`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAInput {
    pub input_ids: Vec<usize>,
    pub segment_ids: Vec<usize>,
    /// Position of the first context token.
    pub context_start: usize,
    /// Char range in the original context of each kept context token.
    pub context_token_offsets: Vec<(usize, usize)>,
}

impl QAInput {
    pub fn context_len(&self) -> usize {
        self.context_token_offsets.len()
    }

    pub fn context_positions(&self) -> std::ops::Range<usize> {
        self.context_start..self.context_start + self.context_len()
    }

    /// Length without trailing padding.
    pub fn unpadded_len(&self) -> usize {
        self.context_start + self.context_len() + 1
    }

    pub fn attention_mask(&self) -> Vec<bool> {
        self.input_ids.iter().map(|&id| id != PAD).collect()
    }
}

/// Packs a question and its context, truncating the context to fit
/// `max_len`.
pub fn pack_qa(question: &str, context: &str, vocab: &Vocab, max_len: usize) -> Result<QAInput> {
    let question_ids = vocab.encode(question);
    if question_ids.len() + 3 >= max_len {
        return Err(Error::QuestionTooLong {
            tokens: question_ids.len(),
            max_len,
        });
    }
    let budget = max_len - question_ids.len() - 3;
    let mut context_tokens = tokenize_with_offsets(context);
    context_tokens.truncate(budget);

    let mut input_ids = Vec::with_capacity(max_len);
    let mut segment_ids = Vec::with_capacity(max_len);
    input_ids.push(CLS);
    input_ids.extend(&question_ids);
    input_ids.push(SEP);
    segment_ids.resize(input_ids.len(), 0);
    let context_start = input_ids.len();
    input_ids.extend(context_tokens.iter().map(|t| vocab.id(&t.text)));
    input_ids.push(SEP);
    segment_ids.resize(input_ids.len(), 1);
    input_ids.resize(max_len, PAD);
    segment_ids.resize(max_len, 0);

    Ok(QAInput {
        input_ids,
        segment_ids,
        context_start,
        context_token_offsets: context_tokens.iter().map(|t| (t.start, t.end)).collect(),
    })
}
