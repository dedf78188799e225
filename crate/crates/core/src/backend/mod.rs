//! Model completion backends.
//!
//! Scripted backends (oracle, uniform random, fixed wrong, replay) exist for
//! desk-scale verification; [`ChatCompletionsBackend`] speaks the common
//! chat-completions HTTP wire format with retries and a response cache.

mod cache;
mod remote;
mod scripted;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use cache::ResponseCache;
pub use remote::{ChatCompletionsBackend, RemoteConfig};
pub use scripted::{scripted_policy, Policy, ReplayScript, ScriptedBackend};

use crate::prompting::PromptText;
use crate::protocol::Mode;
use crate::taskgen::MazeTask;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<Vec<String>>,
}

fn default_max_tokens() -> u32 {
    1024
}

impl Default for DecodingParams {
    fn default() -> Self {
        DecodingParams {
            temperature: 0.0,
            max_tokens: default_max_tokens(),
            stop: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub text: String,
    pub backend_id: String,
    pub latency_ms: u64,
    pub cached: bool,
    /// Retries spent before this response was obtained.
    pub attempt: u32,
}

/// SHA-256 over backend id, prompt bytes and canonical decoding params.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheKey(pub String);

impl CacheKey {
    pub fn new(backend_id: &str, prompt: &str, params: &DecodingParams) -> Self {
        let mut h = Sha256::new();
        for part in [
            backend_id.as_bytes(),
            prompt.as_bytes(),
            serde_json::to_string(params).expect("params serialize").as_bytes(),
        ] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part);
        }
        CacheKey(hex::encode(h.finalize()))
    }
}

impl fmt::Display for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// What a backend may know about the call besides the prompt.
///
/// Scripted backends read the task from here; the remote backend ignores it.
#[derive(Debug, Clone, Copy)]
pub struct CallContext<'a> {
    /// Replay key: `"<mode>:<task_id>"` for episodes, the source id for dialogues.
    pub key: &'a str,
    pub task: Option<&'a MazeTask>,
    pub mode: Option<Mode>,
    /// Pool indices accepted so far in this episode.
    pub selected: &'a [usize],
    /// 1-based round.
    pub round: usize,
    /// Number of prompts already issued under this key.
    pub call_index: usize,
}

impl<'a> CallContext<'a> {
    pub fn keyed(key: &'a str, call_index: usize) -> Self {
        CallContext {
            key,
            task: None,
            mode: None,
            selected: &[],
            round: 1,
            call_index,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("transport failed after {attempts} attempt(s): {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("transport: {0}")]
    Transport(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("replay has {available} response(s) for {key:?}, episode needs {needed}")]
    ReplayExhausted {
        key: String,
        needed: usize,
        available: usize,
    },
    #[error("scripted backend {0} needs a task in the call context")]
    NeedsTask(&'static str),
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    File { path: String, message: String },
}

impl BackendError {
    /// Errors that a later identical request might not reproduce.
    pub fn is_transient(&self) -> bool {
        match self {
            BackendError::Transport(_) => true,
            BackendError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

pub trait Backend: Send + Sync {
    /// Stable identifier, free of secrets.
    fn id(&self) -> String;

    fn complete(
        &self,
        prompt: &PromptText,
        params: &DecodingParams,
        ctx: &CallContext<'_>,
    ) -> Result<ModelResponse, BackendError>;
}

pub fn complete(
    prompt: &PromptText,
    params: &DecodingParams,
    backend: &dyn Backend,
    ctx: &CallContext<'_>,
) -> Result<ModelResponse, BackendError> {
    backend.complete(prompt, params, ctx)
}

/// Textual backend selector used by configuration files and the CLI.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum BackendSpec {
    Oracle,
    UniformRandom { seed: u64 },
    FixedWrong,
    Replay { path: PathBuf },
    Remote,
}

impl FromStr for BackendSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        match (head, arg) {
            ("oracle", None) => Ok(BackendSpec::Oracle),
            ("uniform_random" | "random", None) => Ok(BackendSpec::UniformRandom { seed: 0 }),
            ("uniform_random" | "random", Some(a)) => a
                .parse()
                .map(|seed| BackendSpec::UniformRandom { seed })
                .map_err(|_| format!("bad random seed {a:?}")),
            ("fixed_wrong", None) => Ok(BackendSpec::FixedWrong),
            ("replay", Some(p)) if !p.is_empty() => Ok(BackendSpec::Replay { path: p.into() }),
            ("remote", None) => Ok(BackendSpec::Remote),
            _ => Err(format!(
                "unknown backend {s:?}; expected oracle | uniform_random[:seed] | fixed_wrong | replay:<path> | remote"
            )),
        }
    }
}

impl TryFrom<String> for BackendSpec {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<BackendSpec> for String {
    fn from(b: BackendSpec) -> String {
        b.to_string()
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendSpec::Oracle => f.write_str("oracle"),
            BackendSpec::UniformRandom { seed } => write!(f, "uniform_random:{seed}"),
            BackendSpec::FixedWrong => f.write_str("fixed_wrong"),
            BackendSpec::Replay { path } => write!(f, "replay:{}", path.display()),
            BackendSpec::Remote => f.write_str("remote"),
        }
    }
}

impl BackendSpec {
    pub fn build(&self, remote: &RemoteConfig) -> Result<Arc<dyn Backend>, BackendError> {
        Ok(match self {
            BackendSpec::Oracle => Arc::new(scripted_policy(Policy::Oracle, 0)),
            BackendSpec::UniformRandom { seed } => Arc::new(scripted_policy(Policy::UniformRandom, *seed)),
            BackendSpec::FixedWrong => Arc::new(scripted_policy(Policy::FixedWrong, 0)),
            BackendSpec::Replay { path } => {
                Arc::new(scripted_policy(Policy::Replay(ReplayScript::load(path)?), 0))
            }
            BackendSpec::Remote => Arc::new(ChatCompletionsBackend::new(remote.clone())?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cache_key_depends_on_all_inputs() {
        let p = DecodingParams::default();
        let a = CacheKey::new("b", "prompt", &p);
        assert_eq!(a, CacheKey::new("b", "prompt", &p));
        assert_ne!(a, CacheKey::new("c", "prompt", &p));
        assert_ne!(a, CacheKey::new("b", "prompt!", &p));
        let hot = DecodingParams {
            temperature: 0.7,
            ..p.clone()
        };
        assert_ne!(a, CacheKey::new("b", "prompt", &hot));
    }

    #[test]
    fn spec_round_trip() {
        for s in ["oracle", "uniform_random:7", "fixed_wrong", "replay:/tmp/x.jsonl", "remote"] {
            let spec: BackendSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        assert_eq!("random".parse::<BackendSpec>().unwrap(), BackendSpec::UniformRandom { seed: 0 });
        assert!("replay".parse::<BackendSpec>().is_err());
        assert!("gpt".parse::<BackendSpec>().is_err());
    }
}
