//! Prompt templates and their renderers.
//!
//! Template text lives under `assets/templates/` and is embedded verbatim,
//! including its original spellings (`prerequisit`, `zoo`).

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{RecordKind, SourceRecord};
use crate::taskgen::MazeTask;

const ONE_ROUND: &str = include_str!("../assets/templates/one_round.txt");
const MULTI_ROUND: &str = include_str!("../assets/templates/multi_round.txt");
const MC_DIALOGUE: &str = include_str!("../assets/templates/mc_dialogue.txt");
const ARTICLE_DIALOGUE: &str = include_str!("../assets/templates/article_dialogue.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    OneRound,
    MultiRound,
    McDialogue,
    ArticleDialogue,
}

impl TemplateId {
    pub fn source(self) -> &'static str {
        match self {
            TemplateId::OneRound => ONE_ROUND,
            TemplateId::MultiRound => MULTI_ROUND,
            TemplateId::McDialogue => MC_DIALOGUE,
            TemplateId::ArticleDialogue => ARTICLE_DIALOGUE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptText {
    pub text: String,
    pub template_id: TemplateId,
    pub fill_map: BTreeMap<String, String>,
}

impl fmt::Display for PromptText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("template {template:?}: no value for placeholder {{{{{name}}}}}")]
    Unfilled { template: TemplateId, name: String },
    #[error("template {template:?}: unterminated placeholder")]
    Unterminated { template: TemplateId },
    #[error("template {template:?}: rendered text still contains \"{{{{\"")]
    Unexpanded { template: TemplateId },
    #[error("attempt {attempt} out of range 1..={total}")]
    AttemptOutOfRange { attempt: usize, total: usize },
    #[error("empty evidence pool")]
    EmptyPool,
    #[error("multi-choice record {0:?} has an empty answer")]
    MissingAnswer(String),
}

/// Placeholder names in order of first appearance.
pub fn placeholders(template: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        let after = &rest[open + 2..];
        let Some(close) = after.find("}}") else { break };
        let name = after[..close].to_string();
        if !out.contains(&name) {
            out.push(name);
        }
        rest = &after[close + 2..];
    }
    out
}

/// Substitutes every `{{name}}` in the template. Values are inserted verbatim.
pub fn render(template: TemplateId, fill_map: BTreeMap<String, String>) -> Result<PromptText, PromptError> {
    let src = template.source();
    let mut text = String::with_capacity(src.len() * 2);
    let mut rest = src;
    while let Some(open) = rest.find("{{") {
        text.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        let close = after
            .find("}}")
            .ok_or(PromptError::Unterminated { template })?;
        let name = &after[..close];
        let value = fill_map.get(name).ok_or_else(|| PromptError::Unfilled {
            template,
            name: name.to_string(),
        })?;
        text.push_str(value);
        rest = &after[close + 2..];
    }
    text.push_str(rest);
    if text.contains("{{") {
        return Err(PromptError::Unexpanded { template });
    }
    Ok(PromptText {
        text,
        template_id: template,
        fill_map,
    })
}

/// `"i: sentence"` lines, 0-based, newline-separated.
pub fn tagged_maze(task: &MazeTask) -> String {
    task.pool
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{i}: {}", s.text))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn ordinal(n: usize) -> String {
    let suffix = match (n % 10, n % 100) {
        (_, 11..=13) => "th",
        (1, _) => "st",
        (2, _) => "nd",
        (3, _) => "rd",
        _ => "th",
    };
    format!("{n}{suffix}")
}

fn task_fill(task: &MazeTask, background: &str) -> BTreeMap<String, String> {
    BTreeMap::from([
        ("prerequisit".to_string(), background.to_string()),
        ("question".to_string(), task.question.clone()),
        ("answer".to_string(), task.answer.clone()),
        ("groundtruth zoo length".to_string(), task.chain_len().to_string()),
        ("tagged maze".to_string(), tagged_maze(task)),
    ])
}

pub fn render_one_round(task: &MazeTask) -> Result<PromptText, PromptError> {
    if task.pool.is_empty() {
        return Err(PromptError::EmptyPool);
    }
    render(TemplateId::OneRound, task_fill(task, &task.background))
}

/// `background_now` is the initial background with accepted evidence appended.
pub fn render_multi_round(task: &MazeTask, background_now: &str, attempt: usize) -> Result<PromptText, PromptError> {
    if task.pool.is_empty() {
        return Err(PromptError::EmptyPool);
    }
    let total = task.chain_len();
    if attempt == 0 || attempt > total {
        return Err(PromptError::AttemptOutOfRange { attempt, total });
    }
    let mut fill = task_fill(task, background_now);
    fill.insert("i_th".into(), ordinal(attempt));
    render(TemplateId::MultiRound, fill)
}

/// Text handed to the dialogue templates as `{{Document}}`.
pub fn dialogue_document(record: &SourceRecord) -> String {
    match record.kind {
        RecordKind::DocQa if !record.question.is_empty() => format!("{} {}", record.text, record.question),
        _ => record.text.clone(),
    }
}

/// Picks the template from the record kind.
pub fn render_dialogue_prompt(record: &SourceRecord) -> Result<PromptText, PromptError> {
    match record.kind {
        RecordKind::DocQa => {
            if record.answer.is_empty() {
                return Err(PromptError::MissingAnswer(record.id.clone()));
            }
            render(
                TemplateId::McDialogue,
                BTreeMap::from([
                    ("Answer".to_string(), record.answer.clone()),
                    ("Document".to_string(), dialogue_document(record)),
                ]),
            )
        }
        RecordKind::Article => render(
            TemplateId::ArticleDialogue,
            BTreeMap::from([("Document".to_string(), record.text.clone())]),
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Tier;
    use crate::taskgen::Sentence;

    fn task(chain: usize, n_noise: usize) -> MazeTask {
        let mk = |origin: &str, i: usize| Sentence {
            text: format!("S{origin}{i}."),
            origin_id: origin.into(),
            origin_index: i,
        };
        let gt_chain: Vec<Sentence> = (1..=chain).map(|i| mk("r", i)).collect();
        let noise: Vec<Sentence> = (1..=n_noise).map(|i| mk("z", i)).collect();
        let pool = gt_chain.iter().chain(&noise).cloned().collect();
        MazeTask {
            task_id: "r/n0".into(),
            source_id: "r".into(),
            background: "BG.".into(),
            question: "Q?".into(),
            answer: "A".into(),
            gt_chain,
            noise,
            pool,
            noise_level: n_noise,
            seed: 0,
            tier: Tier::Basic,
        }
    }

    #[test]
    fn templates_have_expected_placeholders() {
        assert_eq!(
            placeholders(ONE_ROUND),
            vec!["prerequisit", "question", "answer", "groundtruth zoo length", "tagged maze"]
        );
        assert_eq!(
            placeholders(MULTI_ROUND),
            vec!["prerequisit", "question", "answer", "tagged maze", "groundtruth zoo length", "i_th"]
        );
        assert_eq!(placeholders(MC_DIALOGUE), vec!["Answer", "Document"]);
        assert_eq!(placeholders(ARTICLE_DIALOGUE), vec!["Document"]);
    }

    #[test]
    fn single_chain_is_not_pluralized() {
        let p = render_one_round(&task(1, 1)).unwrap();
        assert!(p.text.contains("no more than 1 sentences."));
        assert!(p.text.contains("Identify the 1 sentences"));
    }

    #[test]
    fn pool_lines_are_tagged() {
        let t = task(2, 2);
        let maze = tagged_maze(&t);
        let lines: Vec<&str> = maze.lines().collect();
        assert_eq!(lines.len(), 4);
        for (i, l) in lines.iter().enumerate() {
            assert!(l.starts_with(&format!("{i}: ")));
        }
        assert!(render_one_round(&t).unwrap().text.contains(&maze));
    }

    #[test]
    fn multi_round_attempts() {
        let t = task(2, 0);
        let p = render_multi_round(&t, &t.background, 1).unwrap();
        assert!(p.text.contains("You have 2 attempts in total"));
        assert!(p.text.contains("this is your 1st attempt"));
        let bg = format!("{} {}", t.background, t.pool[1].text);
        let p = render_multi_round(&t, &bg, 2).unwrap();
        assert_eq!(p.fill_map["prerequisit"], bg);
        assert!(p.fill_map["prerequisit"].ends_with(&t.pool[1].text));
        assert!(p.text.contains("2nd attempt"));
        assert_eq!(
            render_multi_round(&t, &t.background, 3),
            Err(PromptError::AttemptOutOfRange { attempt: 3, total: 2 })
        );
        assert!(render_multi_round(&t, &t.background, 0).is_err());
    }

    #[test]
    fn ordinals() {
        let got: Vec<String> = [1, 2, 3, 4, 11, 12, 13, 21, 22, 23, 101, 111].iter().map(|&n| ordinal(n)).collect();
        assert_eq!(got, ["1st", "2nd", "3rd", "4th", "11th", "12th", "13th", "21st", "22nd", "23rd", "101st", "111th"]);
    }

    #[test]
    fn unfilled_placeholder_fails() {
        let err = render(TemplateId::McDialogue, BTreeMap::from([("Document".to_string(), "x".to_string())]));
        assert!(matches!(err, Err(PromptError::Unfilled { .. })));
        let err = render(
            TemplateId::ArticleDialogue,
            BTreeMap::from([("Document".to_string(), "has {{ braces".to_string())]),
        );
        assert!(matches!(err, Err(PromptError::Unexpanded { .. })));
    }

    #[test]
    fn dialogue_variants() {
        let mut rec = SourceRecord {
            id: "x".into(),
            kind: RecordKind::DocQa,
            text: "Vignette.".into(),
            question: "Which drug?".into(),
            answer: "Nitrofurantoin".into(),
            options: vec![],
            tier: Tier::Basic,
            source: "s".into(),
        };
        let p = render_dialogue_prompt(&rec).unwrap();
        assert!(p.text.contains("Most important is the final answer, \"Nitrofurantoin\""));
        assert!(p.text.ends_with("Vignette. Which drug?"));
        assert_eq!(p, render_dialogue_prompt(&rec).unwrap());

        rec.kind = RecordKind::Article;
        let p = render_dialogue_prompt(&rec).unwrap();
        assert_eq!(p.template_id, TemplateId::ArticleDialogue);
        assert!(p.text.contains("do not introduce any new information"));
        assert!(!p.text.contains("final answer"));

        rec.kind = RecordKind::DocQa;
        rec.answer.clear();
        assert!(matches!(render_dialogue_prompt(&rec), Err(PromptError::MissingAnswer(_))));
    }
}
