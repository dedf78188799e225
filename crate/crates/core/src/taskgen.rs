//! Turns a document-QA record into an evidence-ranking task.
//!
//! The first sentence of the source text is the background; the remaining
//! sentences, in document order, are the ground-truth evidence chain. Noise
//! sentences come from other records only, and the display pool is a seeded
//! shuffle of chain plus noise.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{RecordKind, SourceRecord, Tier};
use crate::seeding;
use crate::segment::{segment_sentences, NoSentences};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    pub origin_id: String,
    pub origin_index: usize,
}

/// Identity of a sentence, independent of where it is displayed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SentenceId {
    pub origin_id: String,
    pub origin_index: usize,
}

impl Sentence {
    pub fn id(&self) -> SentenceId {
        SentenceId {
            origin_id: self.origin_id.clone(),
            origin_index: self.origin_index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MazeTask {
    pub task_id: String,
    pub source_id: String,
    pub background: String,
    pub question: String,
    pub answer: String,
    pub gt_chain: Vec<Sentence>,
    pub noise: Vec<Sentence>,
    pub pool: Vec<Sentence>,
    pub noise_level: usize,
    pub seed: u64,
    pub tier: Tier,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TaskError {
    #[error("record {0:?} is not a doc_qa record")]
    NotDocQa(String),
    #[error("unsplittable record {id:?}: {sentences} sentence(s), need at least 2")]
    Unsplittable { id: String, sentences: usize },
    #[error("insufficient noise for {task_id:?}: need {needed}, have {available}")]
    InsufficientNoise {
        task_id: String,
        needed: usize,
        available: usize,
    },
    #[error("invalid task {task_id:?}: {message}")]
    Invalid { task_id: String, message: String },
}

/// Sentences of `record` tagged with their origin.
pub fn record_sentences(record: &SourceRecord) -> Result<Vec<Sentence>, NoSentences> {
    Ok(segment_sentences(&record.text)?
        .into_iter()
        .enumerate()
        .map(|(i, text)| Sentence {
            text,
            origin_id: record.id.clone(),
            origin_index: i,
        })
        .collect())
}

/// Every evidence (non-background) sentence of every splittable doc_qa record.
pub fn noise_source(records: &[SourceRecord]) -> Vec<Sentence> {
    records
        .iter()
        .filter(|r| r.kind == RecordKind::DocQa)
        .filter_map(|r| record_sentences(r).ok())
        .filter(|s| s.len() >= 2)
        .flat_map(|s| s.into_iter().skip(1))
        .collect()
}

pub fn task_id_for(record_id: &str, noise_level: usize) -> String {
    format!("{record_id}/n{noise_level}")
}

pub fn build_task(
    record: &SourceRecord,
    noise_level: usize,
    seed: u64,
    noise_source: &[Sentence],
) -> Result<MazeTask, TaskError> {
    if record.kind != RecordKind::DocQa {
        return Err(TaskError::NotDocQa(record.id.clone()));
    }
    let mut sentences = record_sentences(record).map_err(|_| TaskError::Unsplittable {
        id: record.id.clone(),
        sentences: 0,
    })?;
    if sentences.len() < 2 {
        return Err(TaskError::Unsplittable {
            id: record.id.clone(),
            sentences: sentences.len(),
        });
    }
    let gt_chain = sentences.split_off(1);
    let background = sentences.remove(0).text;
    let task_id = task_id_for(&record.id, noise_level);

    let mut rng = seeding::stream(seed, &[b"task", task_id.as_bytes()]);
    let candidates = noise_candidates(noise_source, &record.id, &HashSet::new());
    if candidates.len() < noise_level {
        return Err(TaskError::InsufficientNoise {
            task_id,
            needed: noise_level,
            available: candidates.len(),
        });
    }
    let noise: Vec<Sentence> = seeding::sample_indices(candidates.len(), noise_level, &mut rng)
        .into_iter()
        .map(|i| candidates[i].clone())
        .collect();
    let mut pool: Vec<Sentence> = gt_chain.iter().chain(&noise).cloned().collect();
    seeding::shuffle(&mut pool, &mut rng);

    Ok(MazeTask {
        task_id,
        source_id: record.id.clone(),
        background,
        question: record.question.clone(),
        answer: record.answer.clone(),
        gt_chain,
        noise,
        pool,
        noise_level,
        seed,
        tier: record.tier,
    })
}

/// Adds `extra` noise sentences and reshuffles the pool. `extra == 0` is the identity.
pub fn inject_noise(
    task: &MazeTask,
    extra: usize,
    seed: u64,
    noise_source: &[Sentence],
) -> Result<MazeTask, TaskError> {
    if extra == 0 {
        return Ok(task.clone());
    }
    let present: HashSet<SentenceId> = task.noise.iter().map(Sentence::id).collect();
    let candidates = noise_candidates(noise_source, &task.source_id, &present);
    if candidates.len() < extra {
        return Err(TaskError::InsufficientNoise {
            task_id: task.task_id.clone(),
            needed: extra,
            available: candidates.len(),
        });
    }
    let level = (task.noise_level as u64).to_le_bytes();
    let mut rng = seeding::stream(seed, &[b"inject", task.task_id.as_bytes(), &level]);
    let mut out = task.clone();
    out.noise.extend(
        seeding::sample_indices(candidates.len(), extra, &mut rng)
            .into_iter()
            .map(|i| candidates[i].clone()),
    );
    out.pool = out.gt_chain.iter().chain(&out.noise).cloned().collect();
    seeding::shuffle(&mut out.pool, &mut rng);
    out.noise_level += extra;
    Ok(out)
}

fn noise_candidates<'a>(
    source: &'a [Sentence],
    exclude_origin: &str,
    exclude: &HashSet<SentenceId>,
) -> Vec<&'a Sentence> {
    let mut seen = HashSet::new();
    source
        .iter()
        .filter(|s| s.origin_id != exclude_origin)
        .filter(|s| !exclude.contains(&s.id()))
        .filter(|s| seen.insert(s.id()))
        .collect()
}

impl MazeTask {
    pub fn chain_len(&self) -> usize {
        self.gt_chain.len()
    }

    pub fn pool_index_of(&self, id: &SentenceId) -> Option<usize> {
        self.pool.iter().position(|s| s.origin_id == id.origin_id && s.origin_index == id.origin_index)
    }

    /// Pool display indices of the chain, in ground-truth order.
    pub fn gt_pool_indices(&self) -> Vec<usize> {
        self.gt_chain
            .iter()
            .map(|s| self.pool_index_of(&s.id()).expect("chain sentence is in pool"))
            .collect()
    }

    pub fn is_noise_index(&self, idx: usize) -> bool {
        self.pool
            .get(idx)
            .is_some_and(|s| s.origin_id != self.source_id)
    }

    /// Checks the structural invariants of a (possibly deserialized) task.
    pub fn validate(&self) -> Result<(), TaskError> {
        let fail = |message: &str| {
            Err(TaskError::Invalid {
                task_id: self.task_id.clone(),
                message: message.into(),
            })
        };
        if self.gt_chain.is_empty() {
            return fail("empty evidence chain");
        }
        if self.pool.len() != self.gt_chain.len() + self.noise_level || self.noise.len() != self.noise_level {
            return fail("pool size does not match chain plus noise level");
        }
        if self.noise.iter().any(|s| s.origin_id == self.source_id) {
            return fail("noise drawn from the task's own record");
        }
        let mut expected: Vec<SentenceId> = self.gt_chain.iter().chain(&self.noise).map(Sentence::id).collect();
        let mut actual: Vec<SentenceId> = self.pool.iter().map(Sentence::id).collect();
        expected.sort();
        actual.sort();
        if expected != actual {
            return fail("pool is not a permutation of chain plus noise");
        }
        let unique: HashSet<&SentenceId> = actual.iter().collect();
        if unique.len() != actual.len() {
            return fail("duplicate sentence in pool");
        }
        Ok(())
    }
}
