//! Knowledge-injected multilingual extractive question answering.
//!
//! Cross-lingual triples from a knowledge base are assembled into masked
//! entity-completion samples, injected into a small transformer encoder, and
//! the encoder is then finetuned for span extraction in one language and
//! evaluated on every (context language, question language) pair.

pub mod assembler;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod kb;
pub mod pipeline;
pub mod rng;
pub mod synthlang;
pub mod textmodel;
pub mod training;

pub use assembler::{build_corpus, KindWeights, MaskedSample, SampleKind};
pub use encoder::{EncoderParams, ModelConfig};
pub use error::{Error, Result};
pub use evaluation::{evaluate, EvalReport, QAExample};
pub use kb::{KnowledgeBase, LanguageTag, Triple};
pub use synthlang::SynthSpec;
pub use textmodel::Vocab;
pub use training::{run_finetune, run_injection, TrainConfig};
