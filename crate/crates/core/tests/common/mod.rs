#![allow(dead_code)]

use std::path::{Path, PathBuf};

use maze_core::corpus::{self, RecordKind, SourceRecord};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn mini_corpus() -> Vec<SourceRecord> {
    corpus::load_corpus(&fixture("mini_corpus.jsonl"), Some(RecordKind::DocQa)).expect("fixture corpus")
}

pub fn mini_articles() -> Vec<SourceRecord> {
    corpus::load_corpus(&fixture("mini_articles.jsonl"), Some(RecordKind::Article)).expect("fixture articles")
}

pub fn record(id: &str) -> SourceRecord {
    mini_corpus().into_iter().find(|r| r.id == id).expect("fixture record")
}
