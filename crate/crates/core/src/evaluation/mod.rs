//! Span decoding, scoring, per-language-pair reports and token coverage.

mod coverage;
mod dataset;
mod metrics;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::encoder::{forward, qa_logits, EncoderParams};
use crate::error::Result;
use crate::kb::LanguageTag;
use crate::textmodel::{char_slice, pack_qa, Vocab};

pub use coverage::{token_coverage, triple_renderings, CoverageReport};
pub use dataset::{
    flatten, load_dataset, save_dataset, to_squad, Answer, Article, Paragraph, QAExample, RawQa, SquadFile,
};
pub use metrics::{exact_match, is_unspaced_language, normalize_answer, token_f1};

pub const DEFAULT_MAX_ANSWER_LEN: usize = 30;

/// Best `(start, end)` by `start_logits[s] + end_logits[e]` with
/// `s <= e < s + max_answer_len`, both inside `context`. Ties go to the
/// earlier start, then the earlier end. `None` when no pair is allowed.
pub fn decode_span(
    start_logits: &[f64],
    end_logits: &[f64],
    context: Range<usize>,
    max_answer_len: usize,
) -> Option<(usize, usize)> {
    let context = context.start..context.end.min(start_logits.len()).min(end_logits.len());
    let mut best: Option<((usize, usize), f64)> = None;
    for s in context.clone() {
        let last = context.end.min(s.saturating_add(max_answer_len));
        for (e, end) in end_logits.iter().enumerate().take(last).skip(s) {
            let score = start_logits[s] + end;
            if best.is_none_or(|(_, b)| score > b) {
                best = Some(((s, e), score));
            }
        }
    }
    best.map(|(span, _)| span)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub text: String,
}

/// Scores for one (context language, question language) setting, x100.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellScore {
    pub context_lang: LanguageTag,
    pub question_lang: LanguageTag,
    pub f1: f64,
    pub em: f64,
    pub count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub f1: f64,
    pub em: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cells: Vec<CellScore>,
    pub overall: Aggregate,
}

impl EvalReport {
    /// Builds cells from per-example `(context_lang, question_lang, f1, em)`
    /// scores in `[0, 1]`.
    pub fn from_scores<'a>(scores: impl IntoIterator<Item = (&'a LanguageTag, &'a LanguageTag, f64, f64)>) -> Self {
        let mut sums: BTreeMap<(&LanguageTag, &LanguageTag), (f64, f64, usize)> = BTreeMap::new();
        for (c, q, f1, em) in scores {
            let cell = sums.entry((c, q)).or_default();
            cell.0 += f1;
            cell.1 += em;
            cell.2 += 1;
        }
        let cells = sums
            .into_iter()
            .map(|((c, q), (f1, em, count))| CellScore {
                context_lang: c.clone(),
                question_lang: q.clone(),
                f1: 100.0 * f1 / count as f64,
                em: 100.0 * em / count as f64,
                count,
            })
            .collect();
        let mut report = EvalReport {
            cells,
            overall: Aggregate {
                f1: 0.0,
                em: 0.0,
                count: 0,
            },
        };
        report.overall = report.aggregate(|_| true);
        report
    }

    pub fn cell(&self, context_lang: &str, question_lang: &str) -> Option<&CellScore> {
        self.cells
            .iter()
            .find(|c| c.context_lang.as_str() == context_lang && c.question_lang.as_str() == question_lang)
    }

    /// Count-weighted mean over the selected cells.
    pub fn aggregate(&self, mut keep: impl FnMut(&CellScore) -> bool) -> Aggregate {
        let (mut f1, mut em, mut count) = (0.0, 0.0, 0);
        for c in self.cells.iter().filter(|c| keep(c)) {
            f1 += c.f1 * c.count as f64;
            em += c.em * c.count as f64;
            count += c.count;
        }
        if count == 0 {
            return Aggregate {
                f1: 0.0,
                em: 0.0,
                count,
            };
        }
        Aggregate {
            f1: f1 / count as f64,
            em: em / count as f64,
            count,
        }
    }

    /// Cells whose question and context languages differ.
    pub fn cross_pair(&self) -> Aggregate {
        self.aggregate(|c| c.context_lang != c.question_lang)
    }

    /// Text table with one row per setting, then the overall row.
    pub fn to_table(&self) -> String {
        let mut rows: Vec<(String, String, String, String)> = self
            .cells
            .iter()
            .map(|c| {
                (
                    format!("{}/{}", c.context_lang, c.question_lang),
                    format!("{:.2}", c.f1),
                    format!("{:.2}", c.em),
                    c.count.to_string(),
                )
            })
            .collect();
        rows.push((
            "Overall".into(),
            format!("{:.2}", self.overall.f1),
            format!("{:.2}", self.overall.em),
            self.overall.count.to_string(),
        ));
        let header = ("Settings(c/q)", "F1", "Exact Match", "Count");
        let w0 = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(header.0.len());
        let w1 = rows.iter().map(|r| r.1.len()).max().unwrap_or(0).max(header.1.len());
        let w2 = rows.iter().map(|r| r.2.len()).max().unwrap_or(0).max(header.2.len());
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<w0$} | {:>w1$} | {:>w2$} | {}",
            header.0, header.1, header.2, header.3
        );
        for r in &rows {
            let _ = writeln!(out, "{:<w0$} | {:>w1$} | {:>w2$} | {}", r.0, r.1, r.2, r.3);
        }
        out
    }
}

/// Predicts the answer text for one example.
pub fn predict(params: &EncoderParams, vocab: &Vocab, example: &QAExample, max_answer_len: usize) -> Result<String> {
    let qa = pack_qa(&example.question, &example.context, vocab, params.config.max_len)?;
    let n = qa.unpadded_len();
    let hidden = forward(params, &qa.input_ids[..n], &qa.segment_ids[..n], &vec![true; n])?;
    let (start, end) = qa_logits(params, &hidden);
    let span = decode_span(
        start.as_slice().expect("contiguous"),
        end.as_slice().expect("contiguous"),
        qa.context_positions(),
        max_answer_len,
    );
    Ok(match span {
        Some((s, e)) => {
            let first = qa.context_token_offsets[s - qa.context_start].0;
            let last = qa.context_token_offsets[e - qa.context_start].1;
            char_slice(&example.context, first, last).to_string()
        }
        None => String::new(),
    })
}

/// Predicts every example and scores it against the best gold answer.
pub fn evaluate(
    params: &EncoderParams,
    vocab: &Vocab,
    dataset: &[QAExample],
    max_answer_len: usize,
) -> Result<(EvalReport, Vec<Prediction>)> {
    let mut predictions = Vec::with_capacity(dataset.len());
    let mut scores = Vec::with_capacity(dataset.len());
    for ex in dataset {
        let text = predict(params, vocab, ex, max_answer_len)?;
        let best = |metric: fn(&str, &str, &LanguageTag) -> f64| {
            ex.answers
                .iter()
                .map(|a| metric(&text, &a.text, &ex.context_lang))
                .fold(0.0, f64::max)
        };
        scores.push((&ex.context_lang, &ex.question_lang, best(token_f1), best(exact_match)));
        predictions.push(Prediction {
            id: ex.id.clone(),
            text,
        });
    }
    Ok((EvalReport::from_scores(scores), predictions))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lang(s: &str) -> LanguageTag {
        LanguageTag::new(s).unwrap()
    }

    #[test]
    fn decode_examples() {
        let mut start = vec![0.0; 10];
        let mut end = vec![0.0; 10];
        start[5] = 3.0;
        end[7] = 3.0;
        assert_eq!(decode_span(&start, &end, 2..10, 30), Some((5, 7)));
        // best end before best start
        let start = [0.0, 0.0, 0.0, 0.0, 5.0, 0.0];
        let end = [0.0, 6.0, 0.0, 0.0, 0.0, 2.0];
        assert_eq!(decode_span(&start, &end, 0..6, 30), Some((4, 5)));
        // question positions are never chosen
        let start = [9.0, 9.0, 0.0, 0.0];
        let end = [9.0, 9.0, 0.0, 1.0];
        assert_eq!(decode_span(&start, &end, 2..4, 30), Some((2, 3)));
        assert_eq!(decode_span(&start, &end, 2..2, 30), None);
        // length cap
        let start = [1.0, 0.0, 0.0];
        let end = [0.0, 0.0, 1.0];
        assert_eq!(decode_span(&start, &end, 0..3, 2), Some((0, 0)));
    }

    #[test]
    fn cell_means() {
        let (en, zh) = (lang("en"), lang("zh"));
        let report = EvalReport::from_scores([(&en, &zh, 1.0, 1.0), (&en, &zh, 0.5, 0.0), (&en, &en, 1.0, 1.0)]);
        let cell = report.cell("en", "zh").unwrap();
        assert_eq!((cell.f1, cell.em, cell.count), (75.0, 50.0, 2));
        assert_eq!(report.overall.count, 3);
        assert!((report.overall.f1 - 250.0 / 3.0).abs() < 1e-12);
        assert_eq!(report.cross_pair().f1, 75.0);
    }

    #[test]
    fn table_layout() {
        let report = EvalReport {
            cells: vec![CellScore {
                context_lang: lang("en"),
                question_lang: lang("zh"),
                f1: 31.36,
                em: 20.89,
                count: 1,
            }],
            overall: Aggregate {
                f1: 31.36,
                em: 20.89,
                count: 1,
            },
        };
        let table = report.to_table();
        let lines: Vec<_> = table.lines().collect();
        assert_eq!(lines[0], "Settings(c/q) |    F1 | Exact Match | Count");
        assert_eq!(lines[1], "en/zh         | 31.36 |       20.89 | 1");
        assert!(lines[2].starts_with("Overall"));
    }
}
