//! Tokenization, vocabulary, and conversion of samples into model inputs.

mod pack;
mod tokenizer;
mod vocab;

pub use pack::{pack_qa, render, QAInput, TokenizedSample};
pub use tokenizer::{char_slice, is_cjk, tokenize, tokenize_with_offsets, Token};
pub use vocab::{build_vocab, Vocab, CLS, MASK, PAD, SEP, SPECIAL_TOKENS, UNK};
