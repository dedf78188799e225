//! One-round and multi-round evidence ranking episodes.
//!
//! A one-round episode asks once for the whole ordered index list. A
//! multi-round episode asks for one index per round; each accepted sentence
//! is appended to the background before the next round. Unparseable or
//! repeated answers are re-prompted with the identical prompt up to the retry
//! cap and then recorded as NONE, which never scores.

mod parse;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use parse::{parse_selection, ParseEmpty};

use crate::backend::{Backend, BackendError, CallContext, DecodingParams};
use crate::jsonl::sha256_hex;
use crate::prompting::{render_multi_round, render_one_round, PromptError, PromptText};
use crate::taskgen::{MazeTask, SentenceId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    OneRound,
    MultiRound,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::OneRound => "one_round",
            Mode::MultiRound => "multi_round",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "one" | "one_round" => Ok(Mode::OneRound),
            "multi" | "multi_round" => Ok(Mode::MultiRound),
            other => Err(format!("unknown mode {other:?}; expected one | multi")),
        }
    }
}

/// Call key under which an episode's prompts are issued (and replayed).
pub fn episode_key(mode: Mode, task_id: &str) -> String {
    format!("{mode}:{task_id}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeState {
    pub task_id: String,
    pub background_now: String,
    pub selected: Vec<usize>,
    pub remaining_attempts: usize,
    pub mode: Mode,
}

impl EpisodeState {
    pub fn new(task: &MazeTask, mode: Mode) -> Self {
        EpisodeState {
            task_id: task.task_id.clone(),
            background_now: task.background.clone(),
            selected: Vec::new(),
            remaining_attempts: match mode {
                Mode::OneRound => 1,
                Mode::MultiRound => task.chain_len(),
            },
            mode,
        }
    }

    /// Closes a round. An accepted index extends the background by its sentence.
    pub fn finish_round(&mut self, task: &MazeTask, accepted: Option<usize>) {
        if let Some(i) = accepted {
            debug_assert!(!self.selected.contains(&i));
            self.selected.push(i);
            self.background_now.push(' ');
            self.background_now.push_str(&task.pool[i].text);
        }
        self.remaining_attempts = self.remaining_attempts.saturating_sub(1);
    }
}

/// Predicted chain: pool indices with `None` for NONE, padded to the chain length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub indices: Vec<Option<usize>>,
    pub sentences: Vec<Option<SentenceId>>,
}

impl Prediction {
    pub fn from_indices(task: &MazeTask, mut indices: Vec<Option<usize>>) -> Self {
        indices.resize(task.chain_len(), None);
        let sentences = indices
            .iter()
            .map(|i| i.and_then(|i| task.pool.get(i)).map(|s| s.id()))
            .collect();
        Prediction { indices, sentences }
    }

    pub fn all_none(task: &MazeTask) -> Self {
        Self::from_indices(task, Vec::new())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub round: usize,
    /// Background shown in this round's prompt.
    pub background: String,
    pub prompt_digest: String,
    /// Raw text of every response, retries included.
    pub responses: Vec<String>,
    /// Accepted indices; empty when the round ended in NONE.
    pub parsed: Vec<usize>,
    pub retries: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeTranscript {
    pub task_id: String,
    pub mode: Mode,
    pub backend_id: String,
    pub steps: Vec<StepRecord>,
    pub prediction: Prediction,
    /// Only recorded on request so scripted runs stay byte-deterministic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<u64>,
}

impl EpisodeTranscript {
    pub fn prompt_count(&self) -> usize {
        self.steps.iter().map(|s| s.responses.len()).sum()
    }

    pub fn retries_used(&self) -> usize {
        self.steps.iter().map(|s| s.retries).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    /// Re-prompts allowed per round after an unusable answer.
    pub retries: usize,
    pub params: DecodingParams,
    pub record_timing: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            retries: 2,
            params: DecodingParams::default(),
            record_timing: false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ProtocolError {
    #[error("task {task_id}: backend failed: {source}")]
    Backend {
        task_id: String,
        #[source]
        source: BackendError,
        partial: Box<EpisodeTranscript>,
    },
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

struct Episode<'a> {
    task: &'a MazeTask,
    backend: &'a dyn Backend,
    cfg: &'a ProtocolConfig,
    key: String,
    transcript: EpisodeTranscript,
    calls: usize,
    started: Instant,
}

impl<'a> Episode<'a> {
    fn new(task: &'a MazeTask, backend: &'a dyn Backend, cfg: &'a ProtocolConfig, mode: Mode) -> Self {
        Episode {
            task,
            backend,
            cfg,
            key: episode_key(mode, &task.task_id),
            transcript: EpisodeTranscript {
                task_id: task.task_id.clone(),
                mode,
                backend_id: backend.id(),
                steps: Vec::new(),
                prediction: Prediction::all_none(task),
                wall_ms: None,
            },
            calls: 0,
            started: Instant::now(),
        }
    }

    /// Issues `prompt` until `accept` returns a value or the retry cap is hit.
    fn round<T>(
        &mut self,
        round: usize,
        state: &EpisodeState,
        prompt: &PromptText,
        mut accept: impl FnMut(&str) -> Option<T>,
    ) -> Result<(Option<T>, StepRecord), ProtocolError> {
        let mut step = StepRecord {
            round,
            background: state.background_now.clone(),
            prompt_digest: sha256_hex(prompt.text.as_bytes()),
            responses: Vec::new(),
            parsed: Vec::new(),
            retries: 0,
        };
        for attempt in 0..=self.cfg.retries {
            let ctx = CallContext {
                key: &self.key,
                task: Some(self.task),
                mode: Some(state.mode),
                selected: &state.selected,
                round,
                call_index: self.calls,
            };
            let resp = match self.backend.complete(prompt, &self.cfg.params, &ctx) {
                Ok(r) => r,
                Err(source) => {
                    step.retries = attempt;
                    self.transcript.steps.push(step);
                    return Err(self.fail(source));
                }
            };
            self.calls += 1;
            step.retries = attempt;
            let got = accept(&resp.text);
            step.responses.push(resp.text);
            if got.is_some() {
                return Ok((got, step));
            }
        }
        Ok((None, step))
    }

    fn fail(&mut self, source: BackendError) -> ProtocolError {
        let mut partial = self.transcript.clone();
        self.stamp(&mut partial);
        ProtocolError::Backend {
            task_id: self.task.task_id.clone(),
            source,
            partial: Box::new(partial),
        }
    }

    fn stamp(&self, t: &mut EpisodeTranscript) {
        if self.cfg.record_timing {
            t.wall_ms = Some(self.started.elapsed().as_millis() as u64);
        }
    }

    fn finish(self) -> EpisodeTranscript {
        let mut t = self.transcript.clone();
        self.stamp(&mut t);
        t
    }
}

pub fn run_one_round(task: &MazeTask, backend: &dyn Backend, cfg: &ProtocolConfig) -> Result<EpisodeTranscript, ProtocolError> {
    let prompt = render_one_round(task)?;
    let mut ep = Episode::new(task, backend, cfg, Mode::OneRound);
    let state = EpisodeState::new(task, Mode::OneRound);
    let (limit, pool) = (task.chain_len(), task.pool.len());
    let (parsed, mut step) = ep.round(1, &state, &prompt, |text| parse_selection(text, limit, pool).ok())?;
    let indices: Vec<Option<usize>> = parsed.clone().unwrap_or_default().into_iter().map(Some).collect();
    step.parsed = parsed.unwrap_or_default();
    ep.transcript.steps.push(step);
    ep.transcript.prediction = Prediction::from_indices(task, indices);
    Ok(ep.finish())
}

pub fn run_multi_round(task: &MazeTask, backend: &dyn Backend, cfg: &ProtocolConfig) -> Result<EpisodeTranscript, ProtocolError> {
    let mut ep = Episode::new(task, backend, cfg, Mode::MultiRound);
    let mut state = EpisodeState::new(task, Mode::MultiRound);
    let pool = task.pool.len();
    let mut indices = Vec::with_capacity(task.chain_len());
    for round in 1..=task.chain_len() {
        let prompt = render_multi_round(task, &state.background_now, round)?;
        let selected = state.selected.clone();
        let (accepted, mut step) = ep.round(round, &state, &prompt, |text| {
            parse_selection(text, 1, pool)
                .ok()
                .map(|v| v[0])
                .filter(|i| !selected.contains(i))
        })?;
        step.parsed = accepted.into_iter().collect();
        ep.transcript.steps.push(step);
        state.finish_round(task, accepted);
        indices.push(accepted);
        ep.transcript.prediction = Prediction::from_indices(task, indices.clone());
    }
    Ok(ep.finish())
}

pub fn run_episode(task: &MazeTask, mode: Mode, backend: &dyn Backend, cfg: &ProtocolConfig) -> Result<EpisodeTranscript, ProtocolError> {
    match mode {
        Mode::OneRound => run_one_round(task, backend, cfg),
        Mode::MultiRound => run_multi_round(task, backend, cfg),
    }
}

/// Runs independent episodes in parallel; results keep the input order.
pub fn run_episodes(
    tasks: &[MazeTask],
    mode: Mode,
    backend: &dyn Backend,
    cfg: &ProtocolConfig,
) -> Vec<Result<EpisodeTranscript, ProtocolError>> {
    tasks.par_iter().map(|t| run_episode(t, mode, backend, cfg)).collect()
}
