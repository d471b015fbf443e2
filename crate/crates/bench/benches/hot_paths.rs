use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use gxlt::encoder::{forward, loss_and_grad, Batch};
use gxlt::evaluation::{decode_span, DEFAULT_MAX_ANSWER_LEN};
use gxlt::textmodel::{build_vocab, pack_qa, tokenize};
use gxlt::training::QATrainExample;
use gxlt::{EncoderParams, ModelConfig};

const CONTEXT: &str = "Kevin Durant plays for the Phoenix Suns. He was born in Washington. \
    凯文·杜兰特是一名美国职业篮球运动员。The Suns play in the Western Conference.";
const QUESTION: &str = "Where was Kevin Durant born?";

fn model() -> EncoderParams {
    let config = ModelConfig {
        n_layers: 2,
        n_heads: 4,
        d_model: 64,
        d_ff: 128,
        max_len: 64,
        vocab_size: 128,
        dropout: 0.0,
    };
    EncoderParams::init(&config, 7).unwrap()
}

fn bench_encoder(c: &mut Criterion) {
    let vocab = build_vocab([CONTEXT, QUESTION], 128).unwrap();
    let params = model();
    let input = pack_qa(QUESTION, CONTEXT, &vocab, 64).unwrap();
    let mask = input.attention_mask();
    c.bench_function("forward_len64", |b| {
        b.iter(|| forward(&params, black_box(&input.input_ids), &input.segment_ids, &mask).unwrap())
    });
    let start = input.context_start + 8;
    let examples = vec![QATrainExample {
        qa_input: input.clone(),
        gold_start: start,
        gold_end: start + 1,
    }];
    c.bench_function("span_loss_and_grad_len64", |b| {
        b.iter(|| loss_and_grad(&params, Batch::Span(black_box(&examples)), None).unwrap())
    });
}

fn bench_text(c: &mut Criterion) {
    c.bench_function("tokenize_mixed", |b| b.iter(|| tokenize(black_box(CONTEXT))));
}

fn bench_decode(c: &mut Criterion) {
    let n = 384;
    let start: Vec<f64> = (0..n).map(|i| ((i * 37) % 101) as f64 / 10.0).collect();
    let end: Vec<f64> = (0..n).map(|i| ((i * 53) % 97) as f64 / 10.0).collect();
    c.bench_function("decode_span_384", |b| {
        b.iter(|| decode_span(black_box(&start), black_box(&end), 20..n, DEFAULT_MAX_ANSWER_LEN))
    });
}

criterion_group!(benches, bench_encoder, bench_text, bench_decode);
criterion_main!(benches);
