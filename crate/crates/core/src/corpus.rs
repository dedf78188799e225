//! Source corpora: line-delimited document-QA items and articles.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::jsonl;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    DocQa,
    Article,
}

/// Difficulty band.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Basic,
    Advance,
    Challenge,
    #[default]
    Untiered,
}

impl Tier {
    pub const ALL: [Tier; 4] = [Tier::Basic, Tier::Advance, Tier::Challenge, Tier::Untiered];

    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Basic => "basic",
            Tier::Advance => "advance",
            Tier::Challenge => "challenge",
            Tier::Untiered => "untiered",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Tier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "basic" => Ok(Tier::Basic),
            "advance" => Ok(Tier::Advance),
            "challenge" => Ok(Tier::Challenge),
            "untiered" => Ok(Tier::Untiered),
            other => Err(format!("unknown tier {other:?}")),
        }
    }
}

/// One document-QA item or article paragraph.
///
/// Articles carry empty `question` and `answer`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub id: String,
    pub kind: RecordKind,
    pub text: String,
    #[serde(default)]
    pub question: String,
    #[serde(default)]
    pub answer: String,
    #[serde(default)]
    pub options: Vec<String>,
    #[serde(default)]
    pub tier: Tier,
    #[serde(default)]
    pub source: String,
}

impl SourceRecord {
    /// Returns the name of the first field violating the record invariants.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        if self.id.trim().is_empty() {
            return Err(("id", "id must be non-empty".into()));
        }
        if self.text.trim().is_empty() {
            return Err(("text", "text must be non-empty".into()));
        }
        if self.kind == RecordKind::DocQa {
            if self.question.trim().is_empty() {
                return Err(("question", "doc_qa requires question".into()));
            }
            if self.answer.trim().is_empty() {
                return Err(("answer", "doc_qa requires answer".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub path: PathBuf,
    pub record_count: usize,
    pub tier_histogram: BTreeMap<Tier, usize>,
    pub content_digest: String,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: field `{field}`: {message}")]
    InvalidRecord {
        line: usize,
        field: String,
        message: String,
    },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("record {id:?}: unmapped source {source_tag:?} and no default tier configured")]
    UnmappedSource { id: String, source_tag: String },
    #[error(transparent)]
    Jsonl(#[from] jsonl::JsonlError),
}

/// Loads and validates a corpus file. With `kind` set, every record must be of that kind.
pub fn load_corpus(path: &Path, kind: Option<RecordKind>) -> Result<Vec<SourceRecord>, CorpusError> {
    let raw = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_corpus(&raw, kind)
}

pub fn parse_corpus(raw: &str, kind: Option<RecordKind>) -> Result<Vec<SourceRecord>, CorpusError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SourceRecord =
            serde_json::from_str(line).map_err(|e| CorpusError::InvalidRecord {
                line: line_no,
                field: serde_field_hint(&e.to_string()),
                message: e.to_string(),
            })?;
        rec.validate()
            .map_err(|(field, message)| CorpusError::InvalidRecord {
                line: line_no,
                field: field.into(),
                message,
            })?;
        if let Some(k) = kind {
            if rec.kind != k {
                return Err(CorpusError::InvalidRecord {
                    line: line_no,
                    field: "kind".into(),
                    message: format!("expected {k:?}, found {:?}", rec.kind),
                });
            }
        }
        if !seen.insert(rec.id.clone()) {
            return Err(CorpusError::DuplicateId {
                line: line_no,
                id: rec.id,
            });
        }
        out.push(rec);
    }
    Ok(out)
}

// serde_json reports "missing field `x`" / "unknown variant ..." without a field
// name for type errors; pull the backticked name when present.
fn serde_field_hint(msg: &str) -> String {
    msg.split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "<record>".into())
}

pub fn save_corpus(path: &Path, records: &[SourceRecord]) -> Result<(), CorpusError> {
    Ok(jsonl::write(path, records)?)
}

/// Maps source tags to tiers, with an optional fallback.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TierMap {
    pub entries: BTreeMap<String, Tier>,
    #[serde(default)]
    pub default: Option<Tier>,
}

impl Default for TierMap {
    fn default() -> Self {
        let entries = [
            ("medqa-step1", Tier::Basic),
            ("medqa-step2", Tier::Advance),
            ("medqa-step3", Tier::Advance),
            ("medbullets", Tier::Advance),
            ("medbullets-step2", Tier::Advance),
            ("medbullets-step3", Tier::Advance),
            ("jama", Tier::Challenge),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        TierMap {
            entries,
            default: None,
        }
    }
}

impl TierMap {
    pub fn lookup(&self, source: &str) -> Option<Tier> {
        self.entries.get(source).copied().or(self.default)
    }
}

pub fn assign_tier(mut record: SourceRecord, mapping: &TierMap) -> Result<SourceRecord, CorpusError> {
    match mapping.lookup(&record.source) {
        Some(tier) => {
            record.tier = tier;
            Ok(record)
        }
        None => Err(CorpusError::UnmappedSource {
            id: record.id,
            source_tag: record.source,
        }),
    }
}

/// Tier histogram plus a digest over the id-sorted canonical serialization.
pub fn corpus_stats(records: &[SourceRecord]) -> CorpusManifest {
    let mut tier_histogram: BTreeMap<Tier, usize> = Tier::ALL.iter().map(|&t| (t, 0)).collect();
    for r in records {
        *tier_histogram.entry(r.tier).or_default() += 1;
    }
    let mut sorted: Vec<&SourceRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let canonical = jsonl::to_string(&sorted);
    CorpusManifest {
        path: PathBuf::new(),
        record_count: records.len(),
        tier_histogram,
        content_digest: jsonl::sha256_hex(canonical.as_bytes()),
    }
}

pub fn manifest_for(path: &Path, records: &[SourceRecord]) -> CorpusManifest {
    CorpusManifest {
        path: path.to_path_buf(),
        ..corpus_stats(records)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, source: &str, tier: Tier) -> SourceRecord {
        SourceRecord {
            id: id.into(),
            kind: RecordKind::DocQa,
            text: "Some text. More text.".into(),
            question: "Q?".into(),
            answer: "A".into(),
            options: vec![],
            tier,
            source: source.into(),
        }
    }

    #[test]
    fn empty_input_is_empty_corpus() {
        let recs = parse_corpus("", None).unwrap();
        assert!(recs.is_empty());
        let m = corpus_stats(&recs);
        assert_eq!(m.record_count, 0);
        assert!(m.tier_histogram.values().all(|&c| c == 0));
    }

    #[test]
    fn missing_answer_is_rejected() {
        let line = r#"{"id":"x","kind":"doc_qa","text":"T.","question":"Q?","tier":"basic","source":"s"}"#;
        let err = parse_corpus(line, None).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("doc_qa requires answer"), "{msg}");
        assert!(msg.contains("line 1"), "{msg}");
        assert!(msg.contains("answer"), "{msg}");
    }

    #[test]
    fn malformed_line_names_line_and_field() {
        let raw = format!(
            "{}\n{}",
            serde_json::to_string(&rec("a", "jama", Tier::Challenge)).unwrap(),
            r#"{"id":"b","kind":"doc_qa"}"#
        );
        match parse_corpus(&raw, None).unwrap_err() {
            CorpusError::InvalidRecord { line, field, .. } => {
                assert_eq!(line, 2);
                assert_eq!(field, "text");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let a = serde_json::to_string(&rec("a", "jama", Tier::Challenge)).unwrap();
        let raw = format!("{a}\n{a}\n");
        assert!(matches!(
            parse_corpus(&raw, None),
            Err(CorpusError::DuplicateId { line: 2, .. })
        ));
    }

    #[test]
    fn kind_filter_is_enforced() {
        let a = serde_json::to_string(&rec("a", "jama", Tier::Challenge)).unwrap();
        assert!(parse_corpus(&a, Some(RecordKind::Article)).is_err());
        assert!(parse_corpus(&a, Some(RecordKind::DocQa)).is_ok());
    }

    #[test]
    fn default_tier_table() {
        let m = TierMap::default();
        let r = assign_tier(rec("a", "medqa-step1", Tier::Untiered), &m).unwrap();
        assert_eq!(r.tier, Tier::Basic);
        let r = assign_tier(rec("a", "jama", Tier::Untiered), &m).unwrap();
        assert_eq!(r.tier, Tier::Challenge);
        for s in ["medqa-step2", "medqa-step3", "medbullets"] {
            assert_eq!(assign_tier(rec("a", s, Tier::Untiered), &m).unwrap().tier, Tier::Advance);
        }
        assert!(matches!(
            assign_tier(rec("a", "unknown-src", Tier::Untiered), &m),
            Err(CorpusError::UnmappedSource { .. })
        ));
        let with_default = TierMap {
            default: Some(Tier::Untiered),
            ..TierMap::default()
        };
        assert_eq!(
            assign_tier(rec("a", "unknown-src", Tier::Basic), &with_default).unwrap().tier,
            Tier::Untiered
        );
    }

    #[test]
    fn histogram_counts() {
        let recs = vec![
            rec("a", "", Tier::Basic),
            rec("b", "", Tier::Basic),
            rec("c", "", Tier::Basic),
            rec("d", "", Tier::Challenge),
        ];
        let m = corpus_stats(&recs);
        assert_eq!(m.tier_histogram[&Tier::Basic], 3);
        assert_eq!(m.tier_histogram[&Tier::Challenge], 1);
        assert_eq!(m.tier_histogram[&Tier::Advance], 0);
        assert_eq!(m.record_count, m.tier_histogram.values().sum::<usize>());
    }
}
