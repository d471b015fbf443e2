mod common;

use gxlt::evaluation::{decode_span, exact_match, normalize_answer, token_f1};
use gxlt::textmodel::{char_slice, tokenize_with_offsets};
use gxlt::training::optim::{adamw_step, AdamState, AdamWConfig};
use gxlt::training::schedule::{lr_at, warmup_steps};
use gxlt::{EncoderParams, LanguageTag};
use proptest::prelude::*;

fn text() -> impl Strategy<Value = String> {
    proptest::collection::vec(
        prop_oneof![
            "[a-zA-Z]{1,6}",
            "[篮球运动员凯文]{1,3}",
            Just(" ".to_string()),
            Just("  ".to_string()),
            "[.,!?。，·()]",
            Just("Über".to_string()),
            Just("हिन्दी".to_string()),
            Just("the".to_string()),
        ],
        0..12,
    )
    .prop_map(|parts| parts.concat())
}

fn lang() -> impl Strategy<Value = LanguageTag> {
    prop_oneof![Just("en"), Just("zh"), Just("de"), Just("ja")].prop_map(|l| LanguageTag::new(l).unwrap())
}

proptest! {
    #[test]
    fn token_offsets_point_back_into_text(s in text()) {
        let tokens = tokenize_with_offsets(&s);
        for pair in tokens.windows(2) {
            prop_assert!(pair[0].end <= pair[1].start);
        }
        for tok in tokens {
            prop_assert!(!tok.text.is_empty());
            prop_assert!(!tok.text.chars().any(char::is_whitespace));
            prop_assert_eq!(char_slice(&s, tok.start, tok.end).to_lowercase(), tok.text);
        }
    }

    #[test]
    fn f1_is_bounded_symmetric_and_implied_by_em(p in text(), g in text(), l in lang()) {
        let f1 = token_f1(&p, &g, &l);
        prop_assert!((0.0..=1.0).contains(&f1));
        prop_assert_eq!(f1, token_f1(&g, &p, &l));
        if exact_match(&p, &g, &l) == 1.0 {
            prop_assert_eq!(f1, 1.0);
        }
        prop_assert_eq!(exact_match(&p, &p, &l), 1.0);
    }

    #[test]
    fn normalization_is_idempotent(s in text(), l in lang()) {
        let once = normalize_answer(&s, &l);
        prop_assert_eq!(normalize_answer(&once, &l), once);
    }

    #[test]
    fn decoded_spans_respect_constraints(
        logits in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..64),
        lo_frac in 0.0f64..1.0,
        max_len in 1usize..40,
    ) {
        let (start, end): (Vec<f64>, Vec<f64>) = logits.into_iter().unzip();
        let lo = ((start.len() - 1) as f64 * lo_frac) as usize;
        let (s, e) = decode_span(&start, &end, lo..start.len(), max_len).unwrap();
        prop_assert!(lo <= s && s <= e && e < start.len() && e - s < max_len);
    }

    #[test]
    fn warmup_is_monotone_and_continuous(total in 1usize..2000, fraction in 0.0f64..0.5, peak in 1e-6f64..1e-2) {
        let w = warmup_steps(total, fraction);
        for step in 1..=w.min(total) {
            prop_assert!(lr_at(step, total, peak, fraction) >= lr_at(step - 1, total, peak, fraction));
        }
        prop_assert_eq!(lr_at(w, total, peak, fraction), peak);
        let jump = peak - lr_at(w - 1, total, peak, fraction);
        prop_assert!((jump - peak / w as f64).abs() <= 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn zero_learning_rate_changes_nothing(seed in any::<u64>(), wd in 0.0f64..0.1) {
        let mut params = common::tiny_params(seed);
        let before = params.clone();
        let mut grads = params.zeros_like();
        for i in 0..grads.num_parameters() {
            *grads.coordinate_mut(i) = ((i as f64) * 0.37).sin();
        }
        let cfg = AdamWConfig { weight_decay: wd, ..AdamWConfig::default() };
        let mut state = AdamState::new(&params);
        adamw_step(&mut params, &grads, &mut state, 0.0, &cfg).unwrap();
        prop_assert_eq!(params, before);
    }

    #[test]
    fn checkpoints_round_trip_bit_exactly(seed in any::<u64>()) {
        use gxlt::encoder::{load_checkpoint, save_checkpoint, CheckpointMeta};
        let params = common::tiny_params(seed);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &params, &CheckpointMeta::default()).unwrap();
        let (loaded, _): (EncoderParams, _) = load_checkpoint(&path).unwrap();
        prop_assert_eq!(loaded.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            params.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}
