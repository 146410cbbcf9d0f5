//! Generate, critique and refine loop over a [`ChatBackend`].

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::llm::{self, ChatRequest, LlmError, RequestTag, MAX_TEMPERATURE};
use crate::model::{AgentRole, ConfigError, GenerationRecord};
use crate::plan::{validate_plan_value, TherapyPlan, Violation};
use crate::prompts::{
    render_critic_prompt, render_human_revision_prompt, render_refinement_prompt,
    render_therapy_prompt, templates, PromptContext, PromptError, PromptPair,
};

pub const MAX_ROUNDS: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", try_from = "RawConfig")]
pub struct OrchestrationConfig {
    rounds: u32,
    therapy_temperature: f64,
    critic_temperature: f64,
    parse_retries: u32,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct RawConfig {
    #[serde(default = "default_rounds")]
    rounds: u32,
    #[serde(default = "default_therapy_t")]
    therapy_temperature: f64,
    #[serde(default)]
    critic_temperature: f64,
    #[serde(default = "default_retries")]
    parse_retries: u32,
}

fn default_rounds() -> u32 {
    2
}
fn default_therapy_t() -> f64 {
    0.3
}
fn default_retries() -> u32 {
    2
}

impl TryFrom<RawConfig> for OrchestrationConfig {
    type Error = ConfigError;

    fn try_from(r: RawConfig) -> Result<Self, ConfigError> {
        Self::new(r.rounds)?
            .with_temperatures(r.therapy_temperature, r.critic_temperature)
            .map(|c| c.with_parse_retries(r.parse_retries))
    }
}

impl Default for OrchestrationConfig {
    fn default() -> Self {
        Self {
            rounds: default_rounds(),
            therapy_temperature: default_therapy_t(),
            critic_temperature: 0.0,
            parse_retries: default_retries(),
        }
    }
}

impl OrchestrationConfig {
    pub fn new(rounds: u32) -> Result<Self, ConfigError> {
        if rounds > MAX_ROUNDS {
            return Err(ConfigError::Rounds { got: rounds, max: MAX_ROUNDS });
        }
        Ok(Self { rounds, ..Self::default() })
    }

    pub fn with_temperatures(mut self, therapy: f64, critic: f64) -> Result<Self, ConfigError> {
        for t in [therapy, critic] {
            if !(0.0..=MAX_TEMPERATURE).contains(&t) {
                return Err(ConfigError::Temperature(t));
            }
        }
        self.therapy_temperature = therapy;
        self.critic_temperature = critic;
        Ok(self)
    }

    pub fn with_parse_retries(mut self, retries: u32) -> Self {
        self.parse_retries = retries;
        self
    }

    pub fn rounds(&self) -> u32 {
        self.rounds
    }

    pub fn therapy_temperature(&self) -> f64 {
        self.therapy_temperature
    }

    pub fn critic_temperature(&self) -> f64 {
        self.critic_temperature
    }

    pub fn parse_retries(&self) -> u32 {
        self.parse_retries
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseFailure {
    #[error("syntax: {0}")]
    Syntax(String),
    #[error("schema: {}", join_violations(.violations, .detail))]
    Schema { violations: Vec<Violation>, detail: Option<String> },
}

fn join_violations(v: &[Violation], detail: &Option<String>) -> String {
    let mut parts: Vec<String> = v.iter().map(ToString::to_string).collect();
    parts.extend(detail.clone());
    parts.join("; ")
}

impl ParseFailure {
    /// Paths of all schema violations; empty for syntax errors.
    pub fn paths(&self) -> Vec<&str> {
        match self {
            ParseFailure::Syntax(_) => Vec::new(),
            ParseFailure::Schema { violations, .. } => violations.iter().map(|v| v.path.as_str()).collect(),
        }
    }
}

fn strip_fences(raw: &str) -> &str {
    let t = raw.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    // drop the info string (```json)
    let body = rest.split_once('\n').map_or("", |(_, b)| b);
    body.trim_end().strip_suffix("```").unwrap_or(body).trim()
}

/// Parses a model reply into a validated plan. `urgent_flag` is recomputed.
pub fn parse_plan_output(raw: &str) -> Result<TherapyPlan, ParseFailure> {
    let value: Value =
        serde_json::from_str(strip_fences(raw)).map_err(|e| ParseFailure::Syntax(e.to_string()))?;
    let violations = validate_plan_value(&value);
    if !violations.is_empty() {
        return Err(ParseFailure::Schema { violations, detail: None });
    }
    let mut plan: TherapyPlan = serde_json::from_value(value)
        .map_err(|e| ParseFailure::Schema { violations: Vec::new(), detail: Some(e.to_string()) })?;
    plan.refresh_urgent_flag();
    Ok(plan)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LoopStatus {
    Complete,
    /// A refinement round failed; the plan is the last one that parsed.
    Degraded { round: u32, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LoopResult {
    pub final_plan: TherapyPlan,
    pub history: Vec<GenerationRecord>,
    pub red_flag: bool,
    pub status: LoopStatus,
}

impl LoopResult {
    pub fn is_degraded(&self) -> bool {
        matches!(self.status, LoopStatus::Degraded { .. })
    }

    /// Critic replies in round order.
    pub fn critic_texts(&self) -> Vec<&str> {
        self.history
            .iter()
            .filter(|r| r.role == AgentRole::Critic)
            .map(|r| r.raw_output.as_str())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OrchestratorError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("clinician feedback is empty")]
    EmptyFeedback,
    #[error("initial generation failed after {attempts} attempt(s): {last_error}")]
    GenerationFailed { attempts: u32, last_error: String, history: Vec<GenerationRecord> },
    #[error("refinement failed in round {round}: {last_error}")]
    RefinementFailed { round: u32, last_error: String, history: Vec<GenerationRecord> },
}

impl OrchestratorError {
    /// Records produced before the failure.
    pub fn history(&self) -> &[GenerationRecord] {
        match self {
            OrchestratorError::GenerationFailed { history, .. }
            | OrchestratorError::RefinementFailed { history, .. } => history,
            _ => &[],
        }
    }
}

/// Stage notification emitted before each backend call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoopEvent {
    pub role: AgentRole,
    pub loop_round: u32,
    pub total_rounds: u32,
}

pub type Observer<'a> = &'a (dyn Fn(LoopEvent) + Send + Sync);

fn noop(_: LoopEvent) {}

enum StepError {
    Parse(String),
    Backend(LlmError),
}

impl fmt::Display for StepError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepError::Parse(e) => write!(f, "{e}"),
            StepError::Backend(e) => write!(f, "{e}"),
        }
    }
}

struct Recorder<'a> {
    backend: &'a dyn llm::ChatBackend,
    history: Vec<GenerationRecord>,
    next: u32,
}

impl<'a> Recorder<'a> {
    async fn call(
        &mut self,
        role: AgentRole,
        loop_round: u32,
        attempt: u32,
        prompt: &PromptPair,
        temperature: f64,
    ) -> Result<String, LlmError> {
        let tag = RequestTag { role, round: loop_round, attempt };
        let reply = match ChatRequest::pair(&prompt.system, &prompt.human, temperature, tag) {
            Ok(req) => llm::complete(&req, self.backend).await,
            Err(e) => Err(e),
        };
        self.history.push(GenerationRecord {
            round: self.next,
            loop_round,
            role,
            prompt_system: prompt.system.clone(),
            prompt_human: prompt.human.clone(),
            raw_output: reply.as_ref().cloned().unwrap_or_default(),
            parsed_ok: reply.is_ok(),
            error: reply.as_ref().err().map(ToString::to_string),
        });
        self.next += 1;
        reply
    }

    /// Requests a plan, re-prompting with the parse error up to `retries` times.
    async fn plan(
        &mut self,
        role: AgentRole,
        loop_round: u32,
        prompt: &PromptPair,
        temperature: f64,
        retries: u32,
    ) -> Result<TherapyPlan, (u32, StepError)> {
        let mut current = prompt.clone();
        let mut attempt = 0;
        loop {
            let err = match self.call(role, loop_round, attempt, &current, temperature).await {
                Ok(raw) => match parse_plan_output(&raw) {
                    Ok(plan) => return Ok(plan),
                    Err(e) => {
                        let last = self.history.last_mut().expect("just pushed");
                        last.parsed_ok = false;
                        last.error = Some(e.to_string());
                        StepError::Parse(e.to_string())
                    }
                },
                Err(LlmError::ResponseEmpty) => StepError::Parse(LlmError::ResponseEmpty.to_string()),
                Err(e) => return Err((attempt + 1, StepError::Backend(e))),
            };
            if attempt >= retries {
                return Err((attempt + 1, err));
            }
            attempt += 1;
            current.human = format!(
                "{}\n\nYour previous response could not be used ({err}). Reply again with ONLY the corrected JSON object.",
                prompt.human
            );
        }
    }
}

pub async fn run_loop(
    ctx: &PromptContext,
    config: &OrchestrationConfig,
    backend: &dyn llm::ChatBackend,
) -> Result<LoopResult, OrchestratorError> {
    run_loop_observed(ctx, config, backend, &noop).await
}

pub async fn run_loop_observed(
    ctx: &PromptContext,
    config: &OrchestrationConfig,
    backend: &dyn llm::ChatBackend,
    observe: Observer<'_>,
) -> Result<LoopResult, OrchestratorError> {
    let total_rounds = config.rounds;
    let event = |role, loop_round| LoopEvent { role, loop_round, total_rounds };
    let mut rec = Recorder { backend, history: Vec::new(), next: 0 };

    let initial = render_therapy_prompt(ctx)?;
    observe(event(AgentRole::TherapyInitial, 0));
    let mut plan = match rec
        .plan(AgentRole::TherapyInitial, 0, &initial, config.therapy_temperature, config.parse_retries)
        .await
    {
        Ok(p) => p,
        Err((attempts, e)) => {
            return Err(OrchestratorError::GenerationFailed {
                attempts,
                last_error: e.to_string(),
                history: rec.history,
            })
        }
    };

    let mut status = LoopStatus::Complete;
    for round in 1..=config.rounds {
        let critic_prompt = render_critic_prompt(&plan, ctx)?;
        observe(event(AgentRole::Critic, round));
        let feedback =
            match rec.call(AgentRole::Critic, round, 0, &critic_prompt, config.critic_temperature).await {
                Ok(text) => text,
                Err(e) => {
                    status = LoopStatus::Degraded { round, reason: e.to_string() };
                    break;
                }
            };
        let refine_prompt = render_refinement_prompt(&plan, &feedback, ctx)?;
        observe(event(AgentRole::Refine, round));
        match rec
            .plan(AgentRole::Refine, round, &refine_prompt, config.therapy_temperature, config.parse_retries)
            .await
        {
            Ok(p) => plan = p,
            Err((_, e)) => {
                tracing::warn!(round, error = %e, "refinement failed, keeping previous plan");
                status = LoopStatus::Degraded { round, reason: e.to_string() };
                break;
            }
        }
    }

    Ok(LoopResult { red_flag: plan.urgent_flag, final_plan: plan, history: rec.history, status })
}

/// One clinician-requested revision. Returned history holds only the new
/// records, numbered from `next_index`.
pub async fn apply_human_revision(
    plan: &TherapyPlan,
    feedback: &str,
    ctx: &PromptContext,
    config: &OrchestrationConfig,
    backend: &dyn llm::ChatBackend,
    next_index: u32,
) -> Result<LoopResult, OrchestratorError> {
    if feedback.trim().is_empty() {
        return Err(OrchestratorError::EmptyFeedback);
    }
    let system = templates::THERAPY_SYSTEM.render(&[
        ("language_desc", crate::prompts::Slot::Required(ctx.locale_desc.clone())),
        ("schema_str", crate::prompts::Slot::Required(ctx.schema_str.clone())),
    ])?;
    let human = render_human_revision_prompt(plan, feedback, ctx)?;
    let prompt = PromptPair { system, human };
    let mut rec = Recorder { backend, history: Vec::new(), next: next_index };
    match rec
        .plan(AgentRole::HumanRevision, next_index, &prompt, config.therapy_temperature, config.parse_retries)
        .await
    {
        Ok(revised) => Ok(LoopResult {
            red_flag: revised.urgent_flag,
            final_plan: revised,
            history: rec.history,
            status: LoopStatus::Complete,
        }),
        Err((_, e)) => Err(OrchestratorError::RefinementFailed {
            round: next_index,
            last_error: e.to_string(),
            history: rec.history,
        }),
    }
}
