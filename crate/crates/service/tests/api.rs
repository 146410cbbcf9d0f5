mod common;

use std::sync::Arc;

use common::*;
use serde_json::{json, Value};
use tempfile::tempdir;
use vst_core::samples::fixture_plans;
use vst_core::wav::decode_wav;
use vst_service::session::{Lifecycle, LogLine, SessionEvent, Stage};
use vst_service::{Backends, Mode};

fn full_meta(rounds: u32) -> Value {
    json!({
        "mode": "full",
        "patient": {"demographics": "adult", "goals": "phone calls", "locale": "en-US"},
        "segmentation": {"durationS": 4, "overlapPct": 50},
        "orchestration": {"rounds": rounds}
    })
}

#[tokio::test(flavor = "multi_thread")]
async fn submission_returns_id_and_queues() {
    let dir = tempdir().unwrap();
    let (svc, _) = mock_service(&dir);
    let base = serve(svc.clone()).await;
    let http = reqwest::Client::new();
    let resp = http
        .post(format!("{base}/api/sessions"))
        .multipart(multipart(&full_meta(0), synthetic_wav(10.0)))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 202);
    let body: Value = resp.json().await.unwrap();
    let id = body["sessionId"].as_str().unwrap().to_owned();
    assert_eq!(id.len(), 36);
    assert_eq!(id, id.to_lowercase());
    assert_eq!(uuid::Uuid::parse_str(&id).unwrap().get_version_num(), 4);
    let status = poll_until_idle(&http, &base, &id).await;
    assert_eq!(status["lifecycle"]["state"], "pending_review");
}

#[tokio::test(flavor = "multi_thread")]
async fn rejects_bad_audio_and_config() {
    let dir = tempdir().unwrap();
    let (svc, _) = mock_service(&dir);
    let base = serve(svc).await;
    let http = reqwest::Client::new();

    let resp = http
        .post(format!("{base}/api/sessions"))
        .multipart(multipart(&full_meta(1), stereo_wav()))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 422);
    let body: Value = resp.json().await.unwrap();
    assert_eq!(body["error"], "bad_audio");
    assert!(body["detail"].as_str().unwrap().contains("channels=2"));

    let mut meta = full_meta(1);
    meta["segmentation"]["overlapPct"] = json!(30);
    let resp = http
        .post(format!("{base}/api/sessions"))
        .multipart(multipart(&meta, synthetic_wav(3.0)))
        .send()
        .await
        .unwrap();
    let body: Value = resp.json().await.unwrap();
    assert_eq!(body["error"], "bad_config");
    assert!(body["detail"].as_str().unwrap().contains("overlap"));

    let mut meta = full_meta(1);
    meta["orchestration"]["rounds"] = json!(6);
    let resp = http
        .post(format!("{base}/api/sessions"))
        .multipart(multipart(&meta, synthetic_wav(3.0)))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.json::<Value>().await.unwrap()["error"], "bad_config");

    let resp = http
        .post(format!("{base}/api/sessions"))
        .multipart(reqwest::multipart::Form::new().text("metadata", full_meta(0).to_string()))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 400);
}

#[tokio::test(flavor = "multi_thread")]
async fn classification_only_makes_no_chat_calls() {
    let dir = tempdir().unwrap();
    let (svc, rig) = mock_service(&dir);
    let (id, record) = run(&svc, meta(Mode::ClassificationOnly), &synthetic_wav(10.0)).await;
    assert_eq!(record.lifecycle, Lifecycle::ResultsReady);
    assert_eq!(rig.chat_calls(), 0);
    assert_eq!(rig.classifier.calls(), 4);
    assert_eq!(rig.phonemizer.calls(), 0);
    let doc = svc.results(id).unwrap();
    assert!(doc.plan.is_none() && doc.overall_classification.is_some());
    assert!(doc.chunks.iter().all(|c| c.transcript.is_none()));
}

#[tokio::test(flavor = "multi_thread")]
async fn full_mode_calls_the_model_one_plus_two_n_times() {
    let dir = tempdir().unwrap();
    let (svc, rig) = mock_service(&dir);
    let mut m = meta(Mode::Full);
    m.orchestration = Some(json!({"rounds": 2}));
    let (_, record) = run(&svc, m, &synthetic_wav(10.0)).await;
    assert_eq!(record.lifecycle, Lifecycle::PendingReview);
    assert_eq!(rig.chat_calls(), 5);
    assert_eq!(record.history.len(), 5);
    let plans: Vec<_> = fixture_plans().into_iter().map(|(_, p)| p).collect();
    assert!(plans.contains(record.plan.as_ref().unwrap()));
}

#[tokio::test(flavor = "multi_thread")]
async fn results_have_one_record_per_chunk() {
    let dir = tempdir().unwrap();
    let (svc, _) = mock_service(&dir);
    let base = serve(svc.clone()).await;
    let http = reqwest::Client::new();
    let created: Value = http
        .post(format!("{base}/api/sessions"))
        .multipart(multipart(&full_meta(1), synthetic_wav(10.0)))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    let id = created["sessionId"].as_str().unwrap();
    poll_until_idle(&http, &base, id).await;
    let doc: Value = http.get(format!("{base}/api/sessions/{id}/results")).send().await.unwrap().json().await.unwrap();
    let chunks = doc["chunks"].as_array().unwrap();
    let ranges: Vec<(f64, f64)> =
        chunks.iter().map(|c| (c["startS"].as_f64().unwrap(), c["endS"].as_f64().unwrap())).collect();
    assert_eq!(ranges, [(0.0, 4.0), (2.0, 6.0), (4.0, 8.0), (6.0, 10.0)]);
    assert_eq!(doc["analysisSummary"]["chunkCount"], 4);
    assert_eq!(doc["analysisSummary"]["sampleRateHz"], 16000);
    let total: f64 = doc["analysisSummary"]["typeDistribution"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["fraction"].as_f64().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-9);
    for key in ["overallClassification", "plan", "criticTexts", "generationHistory", "auditLog"] {
        assert!(!doc[key].is_null(), "{key}");
    }
    for c in chunks {
        assert!(c["transcript"].is_string() && c["phonemes"].is_array());
    }

    // the heatmap link plays exactly that window
    let url = chunks[2]["audioUrl"].as_str().unwrap();
    let resp = http.get(format!("{base}{url}")).send().await.unwrap();
    assert_eq!(resp.headers()["content-type"], "audio/wav");
    let clip = decode_wav(&resp.bytes().await.unwrap()).unwrap();
    let original = synthetic_samples(10.0, 16_000);
    assert_eq!(clip.samples(), &original[64_000..128_000]);

    let resp = http.get(format!("{base}/api/sessions/{id}/chunks/99/audio")).send().await.unwrap();
    assert_eq!(resp.status(), 404);
    assert_eq!(resp.json::<Value>().await.unwrap()["error"], "chunk_out_of_range");

    // repeated reads are identical
    let again: Value =
        http.get(format!("{base}/api/sessions/{id}/results")).send().await.unwrap().json().await.unwrap();
    assert_eq!(doc, again);
}

#[tokio::test(flavor = "multi_thread")]
async fn unknown_session_is_not_found() {
    let dir = tempdir().unwrap();
    let (svc, _) = mock_service(&dir);
    let base = serve(svc).await;
    let http = reqwest::Client::new();
    for path in ["", "/results", "/export", "/chunks/0/audio"] {
        let resp = http
            .get(format!("{base}/api/sessions/{}{path}", uuid::Uuid::new_v4()))
            .send()
            .await
            .unwrap();
        assert_eq!(resp.status(), 404, "{path}");
    }
    let resp = http.get(format!("{base}/api/sessions/not-a-uuid")).send().await.unwrap();
    assert_eq!(resp.status(), 404);
}

#[tokio::test(flavor = "multi_thread")]
async fn classifier_outage_fails_the_session() {
    let dir = tempdir().unwrap();
    let rig = Rig::new(SEED);
    let backends = Backends { classifier: Arc::new(Down), ..rig.backends(SEED) };
    let svc = open(&dir, backends);
    let (_, record) = run(&svc, meta(Mode::Full), &synthetic_wav(5.0)).await;
    match record.lifecycle {
        Lifecycle::Failed { reason } => {
            assert!(reason.contains("backend unavailable"), "{reason}");
            assert!(reason.contains("connection refused"));
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(rig.chat_calls(), 0);
}

#[tokio::test(flavor = "multi_thread")]
async fn upgrade_rules() {
    let dir = tempdir().unwrap();
    let (svc, _) = mock_service(&dir);
    let base = serve(svc.clone()).await;
    let http = reqwest::Client::new();
    let (full, _) = run(&svc, meta(Mode::Full), &synthetic_wav(6.0)).await;
    let resp = http.post(format!("{base}/api/sessions/{full}/upgrade")).send().await.unwrap();
    assert_eq!(resp.status(), 409);
    assert_eq!(resp.json::<Value>().await.unwrap()["error"], "invalid_state");

    let (light, _) = run(&svc, meta(Mode::ClassificationOnly), &synthetic_wav(6.0)).await;
    let resp = http.post(format!("{base}/api/sessions/{light}/upgrade")).send().await.unwrap();
    assert_eq!(resp.status(), 202);
    let status = poll_until_idle(&http, &base, &light.to_string()).await;
    assert_eq!(status["lifecycle"]["state"], "pending_review");
    let resp = http.post(format!("{base}/api/sessions/{light}/upgrade")).send().await.unwrap();
    assert_eq!(resp.status(), 409);
}

#[tokio::test(flavor = "multi_thread")]
async fn event_stream_reports_monotone_progress() {
    let dir = tempdir().unwrap();
    let (svc, _) = mock_service(&dir);
    let (id, record) = run(&svc, meta(Mode::Full), &synthetic_wav(10.0)).await;
    assert_eq!(record.lifecycle, Lifecycle::PendingReview);
    let log = std::fs::read_to_string(svc.store().session_dir(id).join("events.jsonl")).unwrap();
    let seen: Vec<(Stage, f64)> = log
        .lines()
        .map(|l| serde_json::from_str::<LogLine>(l).unwrap().event)
        .filter_map(|e| match e {
            SessionEvent::Progress { update } => Some((update.stage, update.progress)),
            _ => None,
        })
        .collect();
    assert!(seen.windows(2).all(|w| w[0].1 <= w[1].1), "{seen:?}");
    assert!(seen.iter().all(|(_, p)| (0.0..=1.0).contains(p)));
    let stages: Vec<Stage> = seen.iter().map(|s| s.0).collect();
    let mut dedup = stages.clone();
    dedup.dedup();
    assert_eq!(
        dedup,
        [
            Stage::Segmenting,
            Stage::Classifying,
            Stage::Transcribing,
            Stage::Generating,
            Stage::Critiquing,
            Stage::Refining,
            Stage::Critiquing,
            Stage::Refining,
            Stage::Exporting
        ]
    );
}

#[tokio::test(flavor = "multi_thread")]
async fn sse_endpoint_ends_when_settled() {
    let dir = tempdir().unwrap();
    let (svc, _) = mock_service(&dir);
    let base = serve(svc.clone()).await;
    let (id, _) = run(&svc, meta(Mode::ClassificationOnly), &synthetic_wav(4.0)).await;
    let resp = reqwest::get(format!("{base}/api/sessions/{id}/events")).await.unwrap();
    assert_eq!(resp.headers()["content-type"], "text/event-stream");
    let body = tokio::time::timeout(WAIT, resp.text()).await.unwrap().unwrap();
    assert!(body.starts_with("event: status\ndata: "));
    assert!(body.contains("\"state\":\"results_ready\""));
}

#[tokio::test(flavor = "multi_thread")]
async fn review_flow_over_http() {
    let dir = tempdir().unwrap();
    let (svc, rig) = mock_service(&dir);
    let base = serve(svc.clone()).await;
    let http = reqwest::Client::new();
    let (id, before) = run(&svc, meta(Mode::Full), &synthetic_wav(8.0)).await;
    let calls_before = rig.chat_calls();
    let review = |body: Value| {
        let http = http.clone();
        let url = format!("{base}/api/sessions/{id}/review");
        async move { http.post(url).json(&body).send().await.unwrap() }
    };

    let resp = review(json!({"action": "modify", "clinicianId": "slp-1", "feedback": "  "})).await;
    assert_eq!(resp.status(), 422);
    assert_eq!(resp.json::<Value>().await.unwrap()["error"], "missing_feedback");

    let resp = review(json!({"action": "modify", "clinicianId": "slp-1", "feedback": "add a carryover task"})).await;
    assert_eq!(resp.status(), 200);
    assert_eq!(resp.json::<Value>().await.unwrap()["lifecycle"]["state"], "revising");
    let status = poll_until_idle(&http, &base, &id.to_string()).await;
    assert_eq!(status["lifecycle"]["state"], "pending_review");
    assert_eq!(rig.chat_calls(), calls_before + 1);
    let after = svc.store().get(id).unwrap();
    assert_eq!(after.history.len(), before.history.len() + 1);
    assert_eq!(after.history.last().unwrap().round as usize, before.history.len());

    let resp = review(json!({"action": "modify", "clinicianId": "slp-1", "feedback": "again"})).await;
    assert_eq!(resp.status(), 409);
    assert_eq!(resp.json::<Value>().await.unwrap()["error"], "invalid_action");

    let draft = http.get(format!("{base}/api/sessions/{id}/export")).send().await.unwrap().text().await.unwrap();
    assert!(draft.contains("DRAFT — NOT APPROVED"));

    let resp = review(json!({"action": "approve", "clinicianId": "slp-2"})).await;
    assert_eq!(resp.json::<Value>().await.unwrap()["lifecycle"]["state"], "approved");
    let resp = review(json!({"action": "reject", "clinicianId": "slp-2"})).await;
    assert_eq!(resp.status(), 409);

    let resp = http.get(format!("{base}/api/sessions/{id}/export")).send().await.unwrap();
    assert!(resp.headers()["content-type"].to_str().unwrap().starts_with("text/html"));
    let html = resp.text().await.unwrap();
    assert!(!html.contains("DRAFT — NOT APPROVED"));
    let goal = &svc.store().get(id).unwrap().plan.unwrap().primary_goal.goal;
    assert!(html.contains(html_escape::encode_text(goal).as_ref()));
    assert_eq!(html.matches("<tr><td>20").count(), 2, "two audit rows");

    let doc: Value = http.get(format!("{base}/api/sessions/{id}/results")).send().await.unwrap().json().await.unwrap();
    let actions: Vec<&str> = doc["auditLog"].as_array().unwrap().iter().map(|e| e["action"].as_str().unwrap()).collect();
    assert_eq!(actions, ["modify", "approve"]);
    assert_eq!(doc["auditLog"][1]["clinicianId"], "slp-2");
}

#[tokio::test(flavor = "multi_thread")]
async fn review_needs_a_plan() {
    let dir = tempdir().unwrap();
    let (svc, _) = mock_service(&dir);
    let (id, _) = run(&svc, meta(Mode::ClassificationOnly), &synthetic_wav(4.0)).await;
    let err = svc.review(id, vst_core::review::ReviewAction::new(vst_core::review::ActionKind::Approve, "x"));
    assert!(matches!(err, Err(vst_service::ServiceError::InvalidState(_))));
}
