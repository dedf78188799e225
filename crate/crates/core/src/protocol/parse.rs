//! Extraction of bracketed pool indices from free-form model output.

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("no valid index found in response")]
pub struct ParseEmpty;

/// Scans `text` left to right for `[ ... ]` groups and collects the decimal
/// integers inside them, in order.
///
/// Values `>= pool_size` are dropped, repeats keep their first occurrence,
/// and the result is truncated to `limit`. Tokens that are not plain
/// non-negative integers are ignored.
pub fn parse_selection(text: &str, limit: usize, pool_size: usize) -> Result<Vec<usize>, ParseEmpty> {
    let mut out: Vec<usize> = Vec::new();
    for group in bracket_groups(text) {
        for tok in group.split(|c: char| c == ',' || c.is_whitespace()) {
            let Some(idx) = parse_index(tok) else { continue };
            if idx < pool_size && !out.contains(&idx) {
                out.push(idx);
            }
        }
    }
    out.truncate(limit);
    if out.is_empty() {
        Err(ParseEmpty)
    } else {
        Ok(out)
    }
}

fn parse_index(tok: &str) -> Option<usize> {
    if tok.is_empty() || !tok.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    tok.parse().ok()
}

/// Innermost `[...]` contents; an unmatched `[` is restarted by the next one.
fn bracket_groups(text: &str) -> Vec<&str> {
    let mut groups = Vec::new();
    let mut open: Option<usize> = None;
    for (i, c) in text.char_indices() {
        match c {
            '[' => open = Some(i + 1),
            ']' => {
                if let Some(start) = open.take() {
                    groups.push(&text[start..i]);
                }
            }
            _ => {}
        }
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn appendix_answer() {
        assert_eq!(parse_selection("[0], [1]", 2, 2), Ok(vec![0, 1]));
        assert_eq!(parse_selection("ANSWER:\n[0], [1]", 2, 2), Ok(vec![0, 1]));
    }

    #[test]
    fn dedupe_drop_truncate() {
        assert_eq!(parse_selection("I think [2, 2, 9, 0]", 2, 3), Ok(vec![2, 0]));
    }

    #[test]
    fn empty_cases() {
        assert_eq!(parse_selection("no brackets here", 2, 3), Err(ParseEmpty));
        assert_eq!(parse_selection("[ ]", 2, 3), Err(ParseEmpty));
        assert_eq!(parse_selection("[7]", 2, 3), Err(ParseEmpty));
        assert_eq!(parse_selection("[-1]", 2, 3), Err(ParseEmpty));
        assert_eq!(parse_selection("", 2, 3), Err(ParseEmpty));
    }

    #[test]
    fn bare_numbers_outside_brackets_are_ignored() {
        assert_eq!(parse_selection("Sentence 2 first, then [1]", 2, 3), Ok(vec![1]));
    }

    proptest! {
        #[test]
        fn output_contract(text in ".{0,60}", limit in 1usize..5, pool in 1usize..8) {
            if let Ok(v) = parse_selection(&text, limit, pool) {
                prop_assert!(!v.is_empty() && v.len() <= limit);
                prop_assert!(v.iter().all(|&i| i < pool));
                let mut d = v.clone();
                d.sort();
                d.dedup();
                prop_assert_eq!(d.len(), v.len());
            }
        }

        #[test]
        fn bracketed_lists_round_trip(v in proptest::collection::vec(0usize..10, 1..6)) {
            let mut uniq: Vec<usize> = Vec::new();
            for x in &v { if !uniq.contains(x) { uniq.push(*x); } }
            let text = format!("[{}]", v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", "));
            prop_assert_eq!(parse_selection(&text, 10, 10).unwrap(), uniq);
        }
    }
}
