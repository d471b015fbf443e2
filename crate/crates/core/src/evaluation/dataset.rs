//! SQuAD/MLQA-style datasets with per-question language tags.
//!
//! ```json
//! {"data":[{"paragraphs":[{"context":"...","qas":[{"id":"...","question":"...",
//!   "answers":[{"text":"...","answer_start":12}],
//!   "context_lang":"en","question_lang":"zh"}]}]}]}
//! ```
//!
//! `answer_start` counts chars (code points). Missing language keys fall
//! back to a caller-supplied default.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::LanguageTag;
use crate::textmodel::char_slice;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub text: String,
    pub answer_start: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SquadFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
    pub data: Vec<Article>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub paragraphs: Vec<Paragraph>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub context: String,
    pub qas: Vec<RawQa>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawQa {
    pub id: String,
    pub question: String,
    pub answers: Vec<Answer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_lang: Option<LanguageTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_lang: Option<LanguageTag>,
}

/// One question with its context, languages resolved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QAExample {
    pub id: String,
    pub question: String,
    pub question_lang: LanguageTag,
    pub context: String,
    pub context_lang: LanguageTag,
    pub answers: Vec<Answer>,
}

impl Answer {
    /// Whether the context really holds `text` at `answer_start`.
    pub fn matches(&self, context: &str) -> bool {
        let len = self.text.chars().count();
        char_slice(context, self.answer_start, self.answer_start + len) == self.text
    }
}

pub fn flatten(file: SquadFile, default_lang: Option<&LanguageTag>) -> Result<Vec<QAExample>> {
    let mut out = Vec::new();
    for article in file.data {
        for paragraph in article.paragraphs {
            for qa in paragraph.qas {
                let resolve = |lang: Option<LanguageTag>, which: &str| {
                    lang.or_else(|| default_lang.cloned()).ok_or_else(|| {
                        Error::Dataset(format!("question {:?} has no {which} and no default language", qa.id))
                    })
                };
                let context_lang = resolve(qa.context_lang.clone(), "context_lang")?;
                let question_lang = resolve(qa.question_lang.clone(), "question_lang")?;
                if qa.answers.is_empty() {
                    return Err(Error::Dataset(format!("question {:?} has no gold answer", qa.id)));
                }
                out.push(QAExample {
                    id: qa.id,
                    question: qa.question,
                    question_lang,
                    context: paragraph.context.clone(),
                    context_lang,
                    answers: qa.answers,
                });
            }
        }
    }
    Ok(out)
}

pub fn load_dataset(path: &Path, default_lang: Option<&LanguageTag>) -> Result<Vec<QAExample>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: SquadFile =
        serde_json::from_str(&text).map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
    flatten(file, default_lang)
}

/// Groups consecutive examples sharing a context into one paragraph.
pub fn to_squad(examples: &[QAExample]) -> SquadFile {
    let mut paragraphs: Vec<Paragraph> = Vec::new();
    for ex in examples {
        let qa = RawQa {
            id: ex.id.clone(),
            question: ex.question.clone(),
            answers: ex.answers.clone(),
            context_lang: Some(ex.context_lang.clone()),
            question_lang: Some(ex.question_lang.clone()),
        };
        match paragraphs.last_mut() {
            Some(p) if p.context == ex.context => p.qas.push(qa),
            _ => paragraphs.push(Paragraph {
                context: ex.context.clone(),
                qas: vec![qa],
            }),
        }
    }
    SquadFile {
        version: None,
        data: vec![Article {
            title: None,
            paragraphs,
        }],
    }
}

pub fn save_dataset(path: &Path, examples: &[QAExample]) -> Result<()> {
    let mut text = serde_json::to_string(&to_squad(examples)).expect("dataset serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{"version":"1.0","data":[{"title":"t","paragraphs":[
        {"context":"Kevin Durant plays basketball.","qas":[
            {"id":"a","question":"谁打篮球?","answers":[{"text":"Kevin Durant","answer_start":0}],"question_lang":"zh"},
            {"id":"b","question":"What does he play?","answers":[{"text":"basketball","answer_start":19}]}]}]}]}"#;

    #[test]
    fn defaults_fill_missing_languages() {
        let file: SquadFile = serde_json::from_str(SAMPLE).unwrap();
        let en = LanguageTag::new("en").unwrap();
        let exs = flatten(file.clone(), Some(&en)).unwrap();
        assert_eq!(exs.len(), 2);
        assert_eq!(exs[0].question_lang.as_str(), "zh");
        assert_eq!(exs[0].context_lang.as_str(), "en");
        assert_eq!(exs[1].question_lang.as_str(), "en");
        assert!(exs.iter().all(|e| e.answers[0].matches(&e.context)));
        assert!(flatten(file, None).is_err());
    }

    #[test]
    fn rejects_missing_answers_and_bad_json() {
        let file: SquadFile = serde_json::from_str(
            r#"{"data":[{"paragraphs":[{"context":"x","qas":[{"id":"a","question":"q","answers":[]}]}]}]}"#,
        )
        .unwrap();
        assert!(flatten(file, Some(&LanguageTag::new("en").unwrap())).is_err());
        assert!(serde_json::from_str::<SquadFile>(r#"{"data":[{"paragraphs":[{"qas":[]}]}]}"#).is_err());
    }

    #[test]
    fn save_then_load() {
        let file: SquadFile = serde_json::from_str(SAMPLE).unwrap();
        let exs = flatten(file, Some(&LanguageTag::new("en").unwrap())).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.json");
        save_dataset(&path, &exs).unwrap();
        let back = load_dataset(&path, None).unwrap();
        assert_eq!(back, exs);
        let squad = to_squad(&back);
        assert_eq!(squad.data[0].paragraphs.len(), 1);
    }

    #[test]
    fn answer_offsets_are_chars() {
        let a = Answer {
            text: "篮球".into(),
            answer_start: 3,
        };
        assert!(a.matches("他打了篮球。"));
        assert!(!a.matches("他打篮球。"));
    }
}
