//! Monologue to doctor-patient dialogue conversion and SFT export.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, BackendError, CallContext, DecodingParams};
use crate::corpus::{RecordKind, SourceRecord};
use crate::prompting::{dialogue_document, render_dialogue_prompt, PromptError};
use crate::seeding;
use crate::segment::normalize_ws;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Mc,
    Article,
}

impl Variant {
    pub fn of(record: &SourceRecord) -> Self {
        match record.kind {
            RecordKind::DocQa => Variant::Mc,
            RecordKind::Article => Variant::Article,
        }
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mc" => Ok(Variant::Mc),
            "article" => Ok(Variant::Article),
            other => Err(format!("unknown variant {other:?}; expected mc | article")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Speaker {
    Doctor,
    Patient,
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Speaker::Doctor => "Doctor",
            Speaker::Patient => "Patient",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub utterance: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Only evaluated for multi-choice records.
    pub answer_verbatim: Option<bool>,
    pub speakers_alternate: bool,
    pub parse_ok: bool,
    /// Non-blocking observations, e.g. `novel-number: 120`.
    pub flags: Vec<String>,
}

impl ValidationReport {
    pub fn valid(&self) -> bool {
        self.parse_ok && self.speakers_alternate && self.answer_verbatim != Some(false)
    }

    fn rank(&self) -> usize {
        [self.parse_ok, self.speakers_alternate, self.answer_verbatim != Some(false)]
            .iter()
            .filter(|&&b| b)
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueRecord {
    pub source_id: String,
    pub variant: Variant,
    pub turns: Vec<Turn>,
    pub raw_text: String,
    pub validation: ValidationReport,
    pub valid: bool,
    pub attempts: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum DialogueError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("record {id}: backend failed: {source}")]
    Backend {
        id: String,
        #[source]
        source: BackendError,
    },
    #[error("max_attempts must be at least 1")]
    NoAttempts,
    #[error("combined export needs both mc and article dialogues")]
    MissingVariant,
    #[error("no valid dialogues to export")]
    EmptyExport,
}

/// Splits backend output into speaker turns.
///
/// Lines starting with `Doctor:` or `Patient:` open a turn; other non-blank
/// lines continue the previous turn. Returns the number of lines dropped
/// before the first turn.
pub fn parse_turns(raw: &str) -> (Vec<Turn>, usize) {
    let mut turns: Vec<Turn> = Vec::new();
    let mut dropped = 0;
    for line in raw.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let opened = [("Doctor:", Speaker::Doctor), ("Patient:", Speaker::Patient)]
            .into_iter()
            .find_map(|(p, s)| line.strip_prefix(p).map(|rest| (s, rest.trim())));
        match (opened, turns.last_mut()) {
            (Some((speaker, rest)), _) => turns.push(Turn {
                speaker,
                utterance: rest.to_string(),
            }),
            (None, Some(last)) => {
                if !last.utterance.is_empty() {
                    last.utterance.push(' ');
                }
                last.utterance.push_str(line);
            }
            (None, None) => dropped += 1,
        }
    }
    (turns, dropped)
}

pub fn render_turns(turns: &[Turn]) -> String {
    turns
        .iter()
        .map(|t| format!("{}: {}", t.speaker, t.utterance))
        .collect::<Vec<_>>()
        .join("\n")
}

fn numbers(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let chars: Vec<char> = text.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        let decimal_point = c == '.' && !cur.is_empty() && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit());
        if c.is_ascii_digit() || decimal_point {
            cur.push(c);
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

const COMMON_CAPITALIZED: &[&str] = &["I", "I'm", "I'd", "I'll", "I've", "Doctor", "Patient", "Dr", "Mr", "Mrs", "Ms"];

/// Capitalized words that do not open a sentence.
fn capitalized_terms(utterance: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut sentence_start = true;
    for raw in utterance.split_whitespace() {
        let word = raw.trim_matches(|c: char| !c.is_alphanumeric() && c != '\'' && c != '-');
        let starts_upper = word.chars().next().is_some_and(char::is_uppercase);
        if starts_upper && !sentence_start && !COMMON_CAPITALIZED.contains(&word) {
            out.push(word.to_string());
        }
        sentence_start = raw.ends_with(['.', '?', '!']);
    }
    out
}

pub fn validate_dialogue(dialogue: &DialogueRecord, record: &SourceRecord) -> ValidationReport {
    let (_, dropped) = parse_turns(&dialogue.raw_text);
    let turns = &dialogue.turns;
    let full = render_turns(turns);
    let mut flags = Vec::new();
    if dropped > 0 {
        flags.push(format!("preamble-dropped: {dropped} line(s)"));
    }

    let mut source = dialogue_document(record);
    source.push(' ');
    source.push_str(&record.answer);
    let source_numbers: HashSet<String> = numbers(&source).into_iter().collect();
    let source_lower = source.to_lowercase();
    let mut seen = HashSet::new();
    for n in numbers(&full) {
        if !source_numbers.contains(&n) && seen.insert(format!("n{n}")) {
            flags.push(format!("novel-number: {n}"));
        }
    }
    for t in turns.iter().flat_map(|t| capitalized_terms(&t.utterance)) {
        if !source_lower.contains(&t.to_lowercase()) && seen.insert(format!("t{t}")) {
            flags.push(format!("novel-term: {t}"));
        }
    }

    ValidationReport {
        answer_verbatim: match dialogue.variant {
            Variant::Mc => Some(!record.answer.is_empty() && full.contains(&record.answer)),
            Variant::Article => None,
        },
        speakers_alternate: turns.windows(2).all(|w| w[0].speaker != w[1].speaker),
        parse_ok: !turns.is_empty(),
        flags,
    }
}

/// Builds and validates a dialogue record from raw backend text.
pub fn dialogue_from_text(record: &SourceRecord, raw_text: &str, attempts: usize) -> DialogueRecord {
    let (turns, _) = parse_turns(raw_text);
    let mut d = DialogueRecord {
        source_id: record.id.clone(),
        variant: Variant::of(record),
        turns,
        raw_text: raw_text.to_string(),
        validation: ValidationReport::default(),
        valid: false,
        attempts,
    };
    d.validation = validate_dialogue(&d, record);
    d.valid = d.validation.valid();
    d
}

/// Generates until a dialogue validates or `max_attempts` is spent; the best
/// attempt is returned either way.
pub fn convert_record(
    record: &SourceRecord,
    backend: &dyn Backend,
    params: &DecodingParams,
    max_attempts: usize,
) -> Result<DialogueRecord, DialogueError> {
    if max_attempts == 0 {
        return Err(DialogueError::NoAttempts);
    }
    let prompt = render_dialogue_prompt(record)?;
    let mut best: Option<DialogueRecord> = None;
    for attempt in 0..max_attempts {
        let ctx = CallContext::keyed(&record.id, attempt);
        let resp = backend.complete(&prompt, params, &ctx).map_err(|source| DialogueError::Backend {
            id: record.id.clone(),
            source,
        })?;
        let d = dialogue_from_text(record, &resp.text, attempt + 1);
        if d.valid {
            return Ok(d);
        }
        if best.as_ref().is_none_or(|b| d.validation.rank() > b.validation.rank()) {
            best = Some(d);
        }
    }
    let mut best = best.expect("at least one attempt");
    best.attempts = max_attempts;
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mix {
    McOnly,
    ArticleOnly,
    Combined,
}

impl FromStr for Mix {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mc_only" | "mc" => Ok(Mix::McOnly),
            "article_only" | "article" => Ok(Mix::ArticleOnly),
            "combined" => Ok(Mix::Combined),
            other => Err(format!("unknown mix {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// One training transcript: patient turns are `user`, doctor turns `assistant`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftRecord {
    pub id: String,
    pub variant: Variant,
    pub messages: Vec<ChatMessage>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftExport {
    pub records: Vec<SftRecord>,
    /// Source ids of invalid dialogues left out.
    pub excluded: Vec<String>,
}

impl SftRecord {
    pub fn from_dialogue(d: &DialogueRecord) -> Self {
        SftRecord {
            id: d.source_id.clone(),
            variant: d.variant,
            messages: d
                .turns
                .iter()
                .map(|t| ChatMessage {
                    role: match t.speaker {
                        Speaker::Patient => "user",
                        Speaker::Doctor => "assistant",
                    }
                    .into(),
                    content: t.utterance.clone(),
                })
                .collect(),
        }
    }
}

pub fn export_sft(dialogues: &[DialogueRecord], mix: Mix, seed: u64) -> Result<SftExport, DialogueError> {
    let wanted = |v: Variant| match mix {
        Mix::McOnly => v == Variant::Mc,
        Mix::ArticleOnly => v == Variant::Article,
        Mix::Combined => true,
    };
    if mix == Mix::Combined {
        let has = |v| dialogues.iter().any(|d| d.variant == v);
        if !has(Variant::Mc) || !has(Variant::Article) {
            return Err(DialogueError::MissingVariant);
        }
    }
    let selected: Vec<&DialogueRecord> = dialogues.iter().filter(|d| wanted(d.variant)).collect();
    let excluded: Vec<String> = selected.iter().filter(|d| !d.valid).map(|d| d.source_id.clone()).collect();
    let mut records: Vec<SftRecord> = selected
        .iter()
        .filter(|d| d.valid)
        .map(|d| SftRecord::from_dialogue(d))
        .collect();
    if records.is_empty() {
        return Err(DialogueError::EmptyExport);
    }
    if mix == Mix::Combined {
        // mc block first, then article block, then a seeded shuffle
        records.sort_by_key(|r| r.variant);
        let mut rng = seeding::stream(seed, &[b"combine"]);
        seeding::shuffle(&mut records, &mut rng);
    }
    Ok(SftExport { records, excluded })
}

/// Whitespace-normalized equality of parsed turns against the raw text.
pub fn round_trips(d: &DialogueRecord) -> bool {
    normalize_ws(&render_turns(&d.turns)) == normalize_ws(&d.raw_text)
}
