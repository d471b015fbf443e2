//! Criterion benchmarks for the encoder, tokenizer and span decoder live in `benches/`.
