//! Answer normalization and the EM / token-F1 scores.

use std::collections::HashMap;

use unicode_properties::{GeneralCategoryGroup, UnicodeGeneralCategory};

use crate::kb::LanguageTag;
use crate::textmodel::tokenize;

const EN_ARTICLES: [&str; 3] = ["a", "an", "the"];

/// Languages written without spaces between words.
pub fn is_unspaced_language(lang: &LanguageTag) -> bool {
    let primary = lang.as_str().split(['-', '_']).next().unwrap_or("");
    matches!(primary, "zh" | "ja")
}

/// Lowercases, deletes punctuation, drops English articles and collapses
/// whitespace. Chinese and Japanese lose all whitespace.
pub fn normalize_answer(text: &str, lang: &LanguageTag) -> String {
    let stripped: String = text
        .to_lowercase()
        .chars()
        .filter(|c| c.general_category_group() != GeneralCategoryGroup::Punctuation)
        .collect();
    if is_unspaced_language(lang) {
        return stripped.chars().filter(|c| !c.is_whitespace()).collect();
    }
    let english = lang.as_str() == "en" || lang.as_str().starts_with("en-");
    stripped
        .split_whitespace()
        .filter(|w| !(english && EN_ARTICLES.contains(w)))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn exact_match(pred: &str, gold: &str, lang: &LanguageTag) -> f64 {
    if normalize_answer(pred, lang) == normalize_answer(gold, lang) {
        1.0
    } else {
        0.0
    }
}

/// Harmonic mean of token precision and recall with multiset overlap.
pub fn token_f1(pred: &str, gold: &str, lang: &LanguageTag) -> f64 {
    let pred = tokenize(&normalize_answer(pred, lang));
    let gold = tokenize(&normalize_answer(gold, lang));
    if pred.is_empty() && gold.is_empty() {
        return 1.0;
    }
    if pred.is_empty() || gold.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &gold {
        *counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0;
    for t in &pred {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / pred.len() as f64;
    let r = overlap as f64 / gold.len() as f64;
    2.0 * p * r / (p + r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lang(s: &str) -> LanguageTag {
        LanguageTag::new(s).unwrap()
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_answer("The Pedigree!", &lang("en")), "pedigree");
        assert_eq!(normalize_answer("篮球运动员。", &lang("zh")), "篮球运动员");
        assert_eq!(normalize_answer("", &lang("en")), "");
        assert_eq!(normalize_answer("  a  b\tc ", &lang("de")), "a b c");
        assert_eq!(normalize_answer("篮球 运动员", &lang("zh")), "篮球运动员");
    }

    #[test]
    fn scores() {
        let en = lang("en");
        assert_eq!(exact_match("the Pedigree", "Pedigree", &en), 1.0);
        assert_eq!(exact_match("coach", "player", &en), 0.0);
        assert_eq!(token_f1("basketball player", "basketball player", &en), 1.0);
        assert!((token_f1("player", "basketball player", &en) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(token_f1("coach", "basketball player", &en), 0.0);
        assert_eq!(token_f1("the", "", &en), 1.0);
        assert_eq!(token_f1("x", "", &en), 0.0);
    }

    #[test]
    fn f1_counts_repeats_once_each() {
        let en = lang("en");
        // pred has two "go", gold one: overlap 1, P = 1/2, R = 1
        assert!((token_f1("go go", "go", &en) - 2.0 / 3.0).abs() < 1e-15);
    }
}
