use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::kb::{KnowledgeBase, LanguageTag, Triple};
use crate::textmodel::tokenize;

/// Fraction of unique question tokens that also occur in the triples, per
/// question language. Languages without questions have no entry.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub per_lang: BTreeMap<LanguageTag, f64>,
}

pub fn token_coverage<'a>(
    questions: impl IntoIterator<Item = (&'a str, &'a LanguageTag)>,
    triple_texts: &BTreeMap<LanguageTag, Vec<String>>,
) -> CoverageReport {
    let mut asked: BTreeMap<&LanguageTag, BTreeSet<String>> = BTreeMap::new();
    for (text, lang) in questions {
        asked.entry(lang).or_default().extend(tokenize(text));
    }
    let mut per_lang = BTreeMap::new();
    for (lang, u) in asked {
        if u.is_empty() {
            continue;
        }
        let t: BTreeSet<String> = triple_texts
            .get(lang)
            .into_iter()
            .flatten()
            .flat_map(|s| tokenize(s))
            .collect();
        let covered = u.iter().filter(|tok| t.contains(*tok)).count();
        per_lang.insert(lang.clone(), covered as f64 / u.len() as f64);
    }
    CoverageReport { per_lang }
}

/// `"head rel tail"` for every triple and every language in which all three
/// elements have a form.
pub fn triple_renderings<'a>(
    kb: &KnowledgeBase,
    triples: impl IntoIterator<Item = &'a Triple>,
) -> BTreeMap<LanguageTag, Vec<String>> {
    let triples: Vec<&Triple> = triples.into_iter().collect();
    let mut out = BTreeMap::new();
    for lang in kb.languages() {
        let rendered: Vec<String> = triples
            .iter()
            .filter_map(|t| {
                let h = kb.entity(&t.head)?.form(lang)?;
                let r = kb.relation(&t.rel)?.form(lang)?;
                let tail = kb.entity(&t.tail)?.form(lang)?;
                Some(format!("{h} {r} {tail}"))
            })
            .collect();
        out.insert(lang.clone(), rendered);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_intersection() {
        let en = LanguageTag::new("en").unwrap();
        let zh = LanguageTag::new("zh").unwrap();
        let triples = BTreeMap::from([(en.clone(), vec!["a c".to_string()])]);
        let report = token_coverage([("a b", &en), ("b a", &en)], &triples);
        assert_eq!(report.per_lang[&en], 0.5);
        assert!(!report.per_lang.contains_key(&zh));
        let report = token_coverage([("我", &zh)], &triples);
        assert_eq!(report.per_lang[&zh], 0.0);
    }
}
