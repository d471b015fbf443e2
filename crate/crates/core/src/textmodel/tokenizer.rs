//! Whole-word / per-character tokenizer.
//!
//! Runs of letters, digits and combining marks form one token; each CJK
//! character and each punctuation or symbol character is a token of its
//! own; whitespace and control characters separate tokens and are dropped.
//! Tokens are lowercased.

use unicode_properties::{GeneralCategoryGroup, UnicodeGeneralCategory};

/// A token and the half-open char range `[start, end)` it came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF     // hiragana, katakana
        | 0x3400..=0x4DBF   // ext A
        | 0x4E00..=0x9FFF   // unified ideographs
        | 0xF900..=0xFAFF   // compatibility ideographs
        | 0x20000..=0x2FA1F)
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c.general_category_group() == GeneralCategoryGroup::Mark
}

/// Tokenizes `text`, keeping char offsets into the original string.
pub fn tokenize_with_offsets(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut current: Option<(String, usize)> = None;
    let flush = |current: &mut Option<(String, usize)>, end: usize, out: &mut Vec<Token>| {
        if let Some((word, start)) = current.take() {
            out.push(Token {
                text: word.to_lowercase(),
                start,
                end,
            });
        }
    };
    let mut count = 0;
    for (idx, c) in text.chars().enumerate() {
        count = idx + 1;
        if c.is_whitespace() || c.is_control() {
            flush(&mut current, idx, &mut out);
        } else if is_cjk(c) || !is_word_char(c) {
            flush(&mut current, idx, &mut out);
            out.push(Token {
                text: c.to_string(),
                start: idx,
                end: idx + 1,
            });
        } else {
            match &mut current {
                Some((word, _)) => word.push(c),
                None => current = Some((c.to_string(), idx)),
            }
        }
    }
    flush(&mut current, count, &mut out);
    out
}

pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_with_offsets(text).into_iter().map(|t| t.text).collect()
}

/// Substring of `text` covering chars `[start, end)`.
pub fn char_slice(text: &str, start: usize, end: usize) -> &str {
    let mut indices = text.char_indices().map(|(b, _)| b).chain(std::iter::once(text.len()));
    let from = indices.nth(start).unwrap_or(text.len());
    let to = if end > start {
        indices.nth(end - start - 1).unwrap_or(text.len())
    } else {
        from
    };
    &text[from..to]
}
