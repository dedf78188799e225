use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;

use super::{Backend, BackendError, CallContext, DecodingParams, ModelResponse};
use crate::jsonl;
use crate::prompting::{PromptText, TemplateId};
use crate::seeding;
use crate::taskgen::MazeTask;

/// Canned responses keyed by call key, consumed in call order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReplayScript {
    responses: HashMap<String, Vec<String>>,
}

#[derive(Deserialize)]
struct ScriptLine {
    key: String,
    responses: Vec<String>,
}

#[derive(Deserialize)]
struct TranscriptLine {
    task_id: String,
    mode: crate::protocol::Mode,
    steps: Vec<TranscriptStep>,
}

#[derive(Deserialize)]
struct TranscriptStep {
    responses: Vec<String>,
}

impl ReplayScript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: impl Into<String>, responses: Vec<String>) {
        self.responses.entry(key.into()).or_default().extend(responses);
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    /// Reads either `{"key", "responses"}` lines or episode transcript lines.
    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let lines: Vec<serde_json::Value> = jsonl::read(path).map_err(|e| BackendError::File {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut script = ReplayScript::new();
        for (i, v) in lines.into_iter().enumerate() {
            let bad = |e: serde_json::Error| BackendError::File {
                path: path.display().to_string(),
                message: format!("line {}: {e}", i + 1),
            };
            if v.get("key").is_some() {
                let l: ScriptLine = serde_json::from_value(v).map_err(bad)?;
                script.push(l.key, l.responses);
            } else {
                let t: TranscriptLine = serde_json::from_value(v).map_err(bad)?;
                let key = crate::protocol::episode_key(t.mode, &t.task_id);
                script.push(key, t.steps.into_iter().flat_map(|s| s.responses).collect());
            }
        }
        Ok(script)
    }
}

pub enum Policy {
    /// Always the correct next evidence.
    Oracle,
    /// Uniform over pool indices not yet chosen.
    UniformRandom,
    /// Lowest-index noise sentence when one exists.
    FixedWrong,
    Replay(ReplayScript),
}

impl Policy {
    fn name(&self) -> &'static str {
        match self {
            Policy::Oracle => "oracle",
            Policy::UniformRandom => "uniform_random",
            Policy::FixedWrong => "fixed_wrong",
            Policy::Replay(_) => "replay",
        }
    }
}

pub struct ScriptedBackend {
    policy: Policy,
    seed: u64,
}

pub fn scripted_policy(policy: Policy, seed: u64) -> ScriptedBackend {
    ScriptedBackend { policy, seed }
}

fn bracketed(indices: &[usize]) -> String {
    let inner: Vec<String> = indices.iter().map(usize::to_string).collect();
    format!("[{}]", inner.join(", "))
}

impl ScriptedBackend {
    fn task<'a>(&self, ctx: &CallContext<'a>) -> Result<&'a MazeTask, BackendError> {
        ctx.task.ok_or(BackendError::NeedsTask(self.policy.name()))
    }

    fn respond(&self, prompt: &PromptText, ctx: &CallContext<'_>) -> Result<String, BackendError> {
        let one_round = prompt.template_id == TemplateId::OneRound;
        match &self.policy {
            Policy::Replay(script) => {
                let list = script.responses.get(ctx.key).map(Vec::as_slice).unwrap_or(&[]);
                list.get(ctx.call_index).cloned().ok_or_else(|| BackendError::ReplayExhausted {
                    key: ctx.key.to_string(),
                    needed: ctx.call_index + 1,
                    available: list.len(),
                })
            }
            Policy::Oracle => {
                let task = self.task(ctx)?;
                let gt = task.gt_pool_indices();
                if one_round {
                    Ok(bracketed(&gt))
                } else {
                    let next: Vec<usize> = gt.into_iter().filter(|i| !ctx.selected.contains(i)).take(1).collect();
                    Ok(bracketed(&next))
                }
            }
            Policy::UniformRandom => {
                let task = self.task(ctx)?;
                let digest = jsonl::sha256_hex(prompt.text.as_bytes());
                let mut rng = seeding::stream(
                    self.seed,
                    &[
                        b"uniform",
                        ctx.key.as_bytes(),
                        digest.as_bytes(),
                        &task.seed.to_le_bytes(),
                        &(ctx.call_index as u64).to_le_bytes(),
                    ],
                );
                let free: Vec<usize> = (0..task.pool.len()).filter(|i| !ctx.selected.contains(i)).collect();
                let k = if one_round { task.chain_len().min(free.len()) } else { free.len().min(1) };
                let picks: Vec<usize> = seeding::sample_indices(free.len(), k, &mut rng)
                    .into_iter()
                    .map(|j| free[j])
                    .collect();
                Ok(bracketed(&picks))
            }
            Policy::FixedWrong => {
                let task = self.task(ctx)?;
                let gt = task.gt_pool_indices();
                let free = (0..task.pool.len()).filter(|i| !ctx.selected.contains(i));
                let mut noise: Vec<usize> = free.clone().filter(|&i| task.is_noise_index(i)).collect();
                if one_round {
                    // noise first, then the chain reversed: never the gt order unless unavoidable
                    noise.extend(gt.iter().rev());
                    noise.truncate(task.chain_len());
                    Ok(bracketed(&noise))
                } else {
                    let correct = gt.iter().copied().find(|i| !ctx.selected.contains(i));
                    let pick = noise
                        .first()
                        .copied()
                        .or_else(|| free.clone().find(|&i| Some(i) != correct))
                        .or_else(|| free.clone().next());
                    Ok(bracketed(&pick.into_iter().collect::<Vec<_>>()))
                }
            }
        }
    }
}

impl Backend for ScriptedBackend {
    fn id(&self) -> String {
        match self.policy {
            Policy::UniformRandom => format!("uniform_random:{}", self.seed),
            _ => self.policy.name().to_string(),
        }
    }

    fn complete(
        &self,
        prompt: &PromptText,
        _params: &DecodingParams,
        ctx: &CallContext<'_>,
    ) -> Result<ModelResponse, BackendError> {
        Ok(ModelResponse {
            text: self.respond(prompt, ctx)?,
            backend_id: self.id(),
            latency_ms: 0,
            cached: false,
            attempt: 0,
        })
    }
}
