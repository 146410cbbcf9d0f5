use std::sync::Mutex;
use std::time::Instant;

use regex::Regex;
use vst_core::llm::mock::{ScriptedChat, ScriptedReply};
use vst_core::llm::{ChatBackend, ChatRequest, LlmError};
use vst_core::orchestrator::{
    apply_human_revision, run_loop, run_loop_observed, LoopEvent, LoopStatus, OrchestrationConfig,
    OrchestratorError,
};
use vst_core::prompts::PromptContext;
use vst_core::samples::{fixture_json, fixture_plan, offline_chat, SAMPLE_CRITIQUE};
use vst_core::{
    validate_plan, AgentRole, BackendFailure, FailureKind, OverallClassification, PatientProfile,
    Severity, StutterLabel,
};

fn ctx() -> PromptContext {
    PromptContext::new(
        PatientProfile { demographics: "adult".into(), ..PatientProfile::default() },
        OverallClassification {
            primary_type: StutterLabel::Prolongation,
            secondary_type: None,
            weighted_confidence: 0.8,
            severity: Severity::Severe,
            stuttering_pct: 40.0,
            problematic_phonemes: vec![],
        },
    )
}

fn scripted() -> ScriptedChat {
    ScriptedChat::new(1)
        .on_role(AgentRole::TherapyInitial, ScriptedReply::text(fixture_json("prolongation_1").unwrap()))
        .on_role(AgentRole::Critic, ScriptedReply::text(SAMPLE_CRITIQUE))
        .on_role(AgentRole::Refine, ScriptedReply::text(fixture_json("prolongation_2").unwrap()))
}

fn roles(history: &[vst_core::GenerationRecord]) -> String {
    history.iter().map(|r| r.role.as_str()).collect::<Vec<_>>().join(" ")
}

#[tokio::test]
async fn loop_shape_for_each_round_count() {
    let pattern = Regex::new(r"^therapy_initial( critic refine)*$").unwrap();
    for n in [0u32, 1, 2, 5] {
        let chat = scripted();
        let started = Instant::now();
        let out = run_loop(&ctx(), &OrchestrationConfig::new(n).unwrap(), &chat).await.unwrap();
        assert!(started.elapsed().as_secs_f64() < 2.0);
        assert_eq!(chat.calls(), 1 + 2 * n as usize);
        assert_eq!(out.history.len(), 1 + 2 * n as usize);
        let r = roles(&out.history);
        assert!(pattern.is_match(&r), "{r}");
        assert_eq!(r.matches("critic").count(), n as usize);
        assert!(validate_plan(&out.final_plan).is_empty());
        assert_eq!(out.status, LoopStatus::Complete);
        let seq: Vec<u32> = out.history.iter().map(|h| h.round).collect();
        assert_eq!(seq, (0..out.history.len() as u32).collect::<Vec<_>>());
        let expected = if n == 0 { "prolongation_1" } else { "prolongation_2" };
        assert_eq!(out.final_plan, fixture_plan(expected));
    }
}

#[tokio::test]
async fn temperatures_and_tags() {
    let chat = scripted();
    run_loop(&ctx(), &OrchestrationConfig::default(), &chat).await.unwrap();
    let reqs = chat.requests();
    let temps: Vec<f64> = reqs.iter().map(ChatRequest::temperature).collect();
    assert_eq!(temps, [0.3, 0.0, 0.3, 0.0, 0.3]);
    let rounds: Vec<u32> = reqs.iter().map(|r| r.tag().round).collect();
    assert_eq!(rounds, [0, 1, 1, 2, 2]);
    // the refine prompt carries the critic reply
    assert!(reqs[2].messages()[1].content.contains(SAMPLE_CRITIQUE));
}

#[tokio::test]
async fn critic_feedback_drives_refinement() {
    let mut weak = fixture_plan("repetition_1");
    weak.steps[0].strategies[0].clinical_reasoning.evidence_base = "see literature".into();
    let mut fixed = weak.clone();
    fixed.steps[0].strategies[0].clinical_reasoning.evidence_base =
        "Guitar & McCauley (2010), ASHA Practice Portal: Fluency Disorders".into();
    let chat = ScriptedChat::new(0)
        .on_role(AgentRole::TherapyInitial, ScriptedReply::text(weak.to_json()))
        .on(AgentRole::Critic, 1, ScriptedReply::text("evidenceBase missing in strategy 1"))
        .on(AgentRole::Refine, 1, ScriptedReply::text(fixed.to_json()));
    let out = run_loop(&ctx(), &OrchestrationConfig::new(1).unwrap(), &chat).await.unwrap();
    assert!(chat.requests()[2].messages()[1].content.contains("CRITIC FEEDBACK: evidenceBase missing in strategy 1"));
    assert!(validate_plan(&out.final_plan).is_empty());
    assert_ne!(out.final_plan, weak);
    assert_eq!(out.final_plan, fixed);
    assert_eq!(out.critic_texts(), ["evidenceBase missing in strategy 1"]);
}

#[tokio::test]
async fn parse_retries_then_success() {
    let good = fixture_json("silent_block_1").unwrap().to_owned();
    let chat = ScriptedChat::new(0).on_role(
        AgentRole::TherapyInitial,
        ScriptedReply::Sequence(vec!["garbage".into(), "{\"steps\": []}".into(), good]),
    );
    let out = run_loop(&ctx(), &OrchestrationConfig::new(0).unwrap(), &chat).await.unwrap();
    let ok: Vec<bool> = out.history.iter().map(|h| h.parsed_ok).collect();
    assert_eq!(ok, [false, false, true]);
    assert!(out.history[0].error.as_deref().unwrap().starts_with("syntax"));
    assert!(out.history[1].error.as_deref().unwrap().starts_with("schema"));
    let retry_prompt = chat.requests()[1].messages()[1].content.clone();
    assert!(retry_prompt.contains("could not be used (syntax"));
    assert_eq!(chat.requests()[2].tag().attempt, 2);
}

#[tokio::test]
async fn generation_failure_after_retries() {
    let chat = ScriptedChat::new(0).on_role(AgentRole::TherapyInitial, ScriptedReply::text("not json"));
    let err = run_loop(&ctx(), &OrchestrationConfig::default(), &chat).await.unwrap_err();
    match &err {
        OrchestratorError::GenerationFailed { attempts, history, .. } => {
            assert_eq!(*attempts, 3);
            assert_eq!(history.len(), 3);
            assert!(history.iter().all(|h| !h.parsed_ok));
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(chat.calls(), 3);
}

#[tokio::test]
async fn refinement_failure_keeps_last_good_plan() {
    let chat = ScriptedChat::new(0)
        .on_role(AgentRole::TherapyInitial, ScriptedReply::text(fixture_json("interjection_2").unwrap()))
        .on_role(AgentRole::Critic, ScriptedReply::text(SAMPLE_CRITIQUE))
        .on(AgentRole::Refine, 1, ScriptedReply::text(fixture_json("interjection_1").unwrap()))
        .on(AgentRole::Refine, 2, ScriptedReply::text("{}"));
    let out = run_loop(&ctx(), &OrchestrationConfig::default(), &chat).await.unwrap();
    assert_eq!(out.status, LoopStatus::Degraded { round: 2, reason: out_reason(&out) });
    assert_eq!(out.final_plan, fixture_plan("interjection_1"));
    // 1 + critic/refine + critic + 3 refine attempts
    assert_eq!(out.history.len(), 7);
    assert!(validate_plan(&out.final_plan).is_empty());
}

fn out_reason(out: &vst_core::orchestrator::LoopResult) -> String {
    match &out.status {
        LoopStatus::Degraded { reason, .. } => reason.clone(),
        LoopStatus::Complete => String::new(),
    }
}

struct Down;

#[async_trait::async_trait]
impl ChatBackend for Down {
    async fn complete(&self, _: &ChatRequest) -> Result<String, LlmError> {
        Err(LlmError::BackendUnavailable(BackendFailure::new(FailureKind::Network, "refused")))
    }
}

#[tokio::test]
async fn backend_outage_is_not_retried_as_parse_error() {
    let err = run_loop(&ctx(), &OrchestrationConfig::default(), &Down).await.unwrap_err();
    match err {
        OrchestratorError::GenerationFailed { attempts, last_error, .. } => {
            assert_eq!(attempts, 1);
            assert!(last_error.contains("refused"));
        }
        other => panic!("{other:?}"),
    }
}

#[tokio::test]
async fn runs_are_reproducible() {
    let a = run_loop(&ctx(), &OrchestrationConfig::new(3).unwrap(), &offline_chat(11)).await.unwrap();
    let b = run_loop(&ctx(), &OrchestrationConfig::new(3).unwrap(), &offline_chat(11)).await.unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[tokio::test]
async fn observer_sees_each_stage() {
    let seen = Mutex::new(Vec::new());
    let observe = |e: LoopEvent| seen.lock().unwrap().push((e.role, e.loop_round));
    run_loop_observed(&ctx(), &OrchestrationConfig::new(1).unwrap(), &scripted(), &observe).await.unwrap();
    assert_eq!(
        seen.into_inner().unwrap(),
        [(AgentRole::TherapyInitial, 0), (AgentRole::Critic, 1), (AgentRole::Refine, 1)]
    );
}

#[tokio::test]
async fn red_flag_reflects_final_plan() {
    let mut flagged = fixture_plan("silent_block_2");
    flagged.explanation.patient_characteristics +=
        " URGENT CLINICAL NOTE: Patient profile indicates serious concerns requiring immediate human assessment.";
    let chat = ScriptedChat::new(0).on_role(AgentRole::TherapyInitial, ScriptedReply::text(flagged.to_json()));
    let out = run_loop(&ctx(), &OrchestrationConfig::new(0).unwrap(), &chat).await.unwrap();
    assert!(out.red_flag && out.final_plan.urgent_flag);
}

#[tokio::test]
async fn human_revision_adds_one_record() {
    let plan = fixture_plan("prolongation_1");
    let chat = ScriptedChat::new(0)
        .on_role(AgentRole::HumanRevision, ScriptedReply::text(fixture_json("prolongation_2").unwrap()));
    let cfg = OrchestrationConfig::default();
    let out = apply_human_revision(&plan, "prioritise desensitization", &ctx(), &cfg, &chat, 5).await.unwrap();
    assert_eq!(out.history.len(), 1);
    assert_eq!(out.history[0].role, AgentRole::HumanRevision);
    assert_eq!(out.history[0].round, 5);
    assert_eq!(out.final_plan, fixture_plan("prolongation_2"));
    let req = &chat.requests()[0];
    assert_eq!(req.temperature(), 0.3);
    assert!(req.messages()[0].content.contains("OUTPUT ONLY THE JSON OBJECT"));
    assert!(req.messages()[1].content.contains("CLINICIAN FEEDBACK: prioritise desensitization"));
}

#[tokio::test]
async fn human_revision_retries_and_fails() {
    let plan = fixture_plan("prolongation_1");
    let good = fixture_json("repetition_2").unwrap().to_owned();
    let chat = ScriptedChat::new(0).on_role(
        AgentRole::HumanRevision,
        ScriptedReply::Sequence(vec!["x".into(), "y".into(), good]),
    );
    let cfg = OrchestrationConfig::default();
    let out = apply_human_revision(&plan, "more home practice", &ctx(), &cfg, &chat, 0).await.unwrap();
    let ok: Vec<bool> = out.history.iter().map(|h| h.parsed_ok).collect();
    assert_eq!(ok, [false, false, true]);

    let bad = ScriptedChat::new(0).on_role(AgentRole::HumanRevision, ScriptedReply::text("nope"));
    let err = apply_human_revision(&plan, "more", &ctx(), &cfg, &bad, 0).await.unwrap_err();
    assert!(matches!(err, OrchestratorError::RefinementFailed { .. }));
    assert_eq!(err.history().len(), 3);

    let err = apply_human_revision(&plan, "  ", &ctx(), &cfg, &bad, 0).await.unwrap_err();
    assert_eq!(err, OrchestratorError::EmptyFeedback);
}
