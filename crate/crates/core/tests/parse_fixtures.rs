use maze_core::protocol::{parse_selection, ParseEmpty};
use serde::Deserialize;

#[derive(Deserialize)]
struct Case {
    name: String,
    response: String,
    limit: usize,
    pool: usize,
    expected: Option<Vec<usize>>,
}

fn cases() -> Vec<Case> {
    serde_json::from_str(include_str!("data/parse_cases.json")).unwrap()
}

#[test]
fn fixture_responses_parse_as_specified() {
    let cases = cases();
    assert!(cases.len() >= 20);
    for c in &cases {
        let got = parse_selection(&c.response, c.limit, c.pool);
        let want = c.expected.clone().ok_or(ParseEmpty);
        assert_eq!(got, want, "case {:?}", c.name);
    }
}
