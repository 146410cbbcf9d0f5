//! Scripted chat backend for tests and offline runs.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use async_trait::async_trait;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{softmax_temperature, ChatBackend, ChatRequest, LlmError};
use crate::model::AgentRole;

#[derive(Debug, Clone, PartialEq)]
pub enum ScriptedReply {
    /// Reply `n` answers attempt `n`; the last reply repeats for later attempts.
    Sequence(Vec<String>),
    /// Candidate replies with logit weights, sampled at the request temperature.
    Weighted(Vec<(String, f64)>),
}

impl ScriptedReply {
    pub fn text(s: impl Into<String>) -> Self {
        ScriptedReply::Sequence(vec![s.into()])
    }
}

/// Replies looked up by `(role, round)`, falling back to a per-role default.
#[derive(Debug, Default)]
pub struct ScriptedChat {
    seed: u64,
    exact: HashMap<(AgentRole, u32), ScriptedReply>,
    by_role: HashMap<AgentRole, ScriptedReply>,
    calls: AtomicUsize,
    log: Mutex<Vec<ChatRequest>>,
}

impl ScriptedChat {
    pub fn new(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn on(mut self, role: AgentRole, round: u32, reply: ScriptedReply) -> Self {
        self.exact.insert((role, round), reply);
        self
    }

    pub fn on_role(mut self, role: AgentRole, reply: ScriptedReply) -> Self {
        self.by_role.insert(role, reply);
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Every request received, in arrival order.
    pub fn requests(&self) -> Vec<ChatRequest> {
        self.log.lock().expect("log lock").clone()
    }

    fn rng_for(&self, request: &ChatRequest) -> ChaCha8Rng {
        let tag = request.tag();
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(tag.role.as_str().as_bytes());
        h.update(tag.round.to_le_bytes());
        h.update(tag.attempt.to_le_bytes());
        let d: [u8; 32] = h.finalize().into();
        ChaCha8Rng::from_seed(d)
    }

    fn select(&self, reply: &ScriptedReply, request: &ChatRequest) -> Result<String, LlmError> {
        match reply {
            ScriptedReply::Sequence(seq) => {
                let i = (request.tag().attempt as usize).min(seq.len().saturating_sub(1));
                seq.get(i).cloned().ok_or(LlmError::ResponseEmpty)
            }
            ScriptedReply::Weighted(variants) => {
                let weights: Vec<f64> = variants.iter().map(|(_, w)| *w).collect();
                let probs = softmax_temperature(&weights, request.temperature())?;
                let draw: f64 = self.rng_for(request).random();
                let mut acc = 0.0;
                for ((text, _), p) in variants.iter().zip(&probs) {
                    acc += p;
                    if draw < acc {
                        return Ok(text.clone());
                    }
                }
                // draw landed in the rounding gap above the cumulative sum
                let last = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
                Ok(variants[last].0.clone())
            }
        }
    }
}

#[async_trait]
impl ChatBackend for ScriptedChat {
    async fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.log.lock().expect("log lock").push(request.clone());
        let tag = request.tag();
        let reply = self
            .exact
            .get(&(tag.role, tag.round))
            .or_else(|| self.by_role.get(&tag.role))
            .ok_or(LlmError::ResponseEmpty)?;
        self.select(reply, request)
    }
}
