//! Rule-based sentence segmentation for clinical vignettes.
//!
//! A boundary is a `.`, `?` or `!` (optionally followed by closing quotes or
//! brackets) followed by whitespace and then an uppercase letter or a digit.
//! A period ending a token from the abbreviation list never splits. Decimal
//! numbers and unit strings never match the rule because no whitespace
//! follows their internal punctuation.

use std::collections::HashSet;
use std::sync::OnceLock;

const ABBREVIATIONS: &str = include_str!("../assets/abbreviations.txt");

fn abbreviations() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        ABBREVIATIONS
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("text yields no sentences")]
pub struct NoSentences;

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}')
}

fn is_opener(c: char) -> bool {
    matches!(c, '"' | '\'' | '(' | '[' | '\u{201c}' | '\u{2018}')
}

fn starts_sentence(rest: &[(usize, char)]) -> bool {
    let mut it = rest.iter().map(|&(_, c)| c).skip_while(|c| is_opener(*c));
    matches!(it.next(), Some(c) if c.is_uppercase() || c.is_ascii_digit())
}

/// Splits `text` into trimmed, non-empty sentences in source order.
pub fn segment_sentences(text: &str) -> Result<Vec<String>, NoSentences> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if matches!(c, '.' | '?' | '!') {
            let mut end = i + 1;
            while end < chars.len() && is_closer(chars[end].1) {
                end += 1;
            }
            let mut next = end;
            while next < chars.len() && chars[next].1.is_whitespace() {
                next += 1;
            }
            let has_gap = next > end;
            if has_gap
                && next < chars.len()
                && starts_sentence(&chars[next..])
                && !(c == '.' && is_abbreviation(&text[start..pos + 1]))
            {
                let cut = chars.get(end).map_or(text.len(), |&(p, _)| p);
                push_trimmed(&mut out, &text[start..cut]);
                start = chars[next].0;
                i = next;
                continue;
            }
        }
        i += 1;
    }
    push_trimmed(&mut out, &text[start..]);
    if out.is_empty() {
        Err(NoSentences)
    } else {
        Ok(out)
    }
}

fn is_abbreviation(upto_period: &str) -> bool {
    let token = upto_period
        .rsplit(char::is_whitespace)
        .next()
        .unwrap_or("")
        .trim_start_matches(is_opener);
    abbreviations().contains(token)
}

fn push_trimmed(out: &mut Vec<String>, s: &str) {
    let t = s.trim();
    if !t.is_empty() {
        out.push(t.to_string());
    }
}

/// Collapses all whitespace runs to single spaces and trims.
pub fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
