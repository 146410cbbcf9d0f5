#![allow(dead_code)]

use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use tempfile::TempDir;
use tokio::sync::Notify;
use uuid::Uuid;
use vst_core::analysis::mock::{MockClassifier, MockPhonemizer, MockTranscriber};
use vst_core::analysis::ClassifierBackend;
use vst_core::llm::mock::ScriptedChat;
use vst_core::llm::ChatBackend;
use vst_core::samples::offline_chat;
use vst_core::wav::encode_wav;
use vst_core::{BackendFailure, Chunk, FailureKind, LabelProbs, PatientProfile};
use vst_service::session::SessionRecord;
use vst_service::{api, Backends, Mode, Service, Settings, SubmissionMeta};

pub const SEED: u64 = 7;
pub const WAIT: Duration = Duration::from_secs(5);

/// Deterministic 16 kHz test signal: a slow chirp plus LCG noise.
pub fn synthetic_samples(seconds: f64, sample_rate: u32) -> Vec<i16> {
    let n = (seconds * sample_rate as f64).round() as usize;
    let mut state: u32 = 0x1234_5678;
    (0..n)
        .map(|i| {
            state = state.wrapping_mul(1_664_525).wrapping_add(1_013_904_223);
            let t = i as f64 / sample_rate as f64;
            let tone = (2.0 * std::f64::consts::PI * (120.0 + 40.0 * t) * t).sin() * 6000.0;
            let noise = ((state >> 16) as f64 / 65536.0 - 0.5) * 800.0;
            (tone + noise) as i16
        })
        .collect()
}

pub fn synthetic_wav(seconds: f64) -> Vec<u8> {
    encode_wav(&synthetic_samples(seconds, 16_000), 16_000)
}

/// Minimal stereo WAV written by hand.
pub fn stereo_wav() -> Vec<u8> {
    let frames = 1600u32;
    let data_len = frames * 4;
    let mut b = Vec::new();
    b.extend_from_slice(b"RIFF");
    b.extend_from_slice(&(36 + data_len).to_le_bytes());
    b.extend_from_slice(b"WAVEfmt ");
    b.extend_from_slice(&16u32.to_le_bytes());
    b.extend_from_slice(&1u16.to_le_bytes());
    b.extend_from_slice(&2u16.to_le_bytes());
    b.extend_from_slice(&16_000u32.to_le_bytes());
    b.extend_from_slice(&(16_000u32 * 4).to_le_bytes());
    b.extend_from_slice(&4u16.to_le_bytes());
    b.extend_from_slice(&16u16.to_le_bytes());
    b.extend_from_slice(b"data");
    b.extend_from_slice(&data_len.to_le_bytes());
    b.resize(b.len() + data_len as usize, 0);
    b
}

pub fn patient() -> PatientProfile {
    PatientProfile {
        demographics: "9-year-old pupil".into(),
        clinical_history: "Onset at age 4".into(),
        therapy_background: "None".into(),
        goals: "Read aloud in class".into(),
        locale: "en-GB".into(),
    }
}

pub fn meta(mode: Mode) -> SubmissionMeta {
    SubmissionMeta::new(mode, patient())
}

/// Mock backends that keep handles for counting calls.
pub struct Rig {
    pub classifier: Arc<MockClassifier>,
    pub transcriber: Arc<MockTranscriber>,
    pub phonemizer: Arc<MockPhonemizer>,
    pub chats: Arc<Mutex<Vec<Arc<ScriptedChat>>>>,
}

impl Rig {
    pub fn new(seed: u64) -> Self {
        Self {
            classifier: Arc::new(MockClassifier::new(seed)),
            transcriber: Arc::new(MockTranscriber::new(seed)),
            phonemizer: Arc::new(MockPhonemizer::new(seed)),
            chats: Arc::default(),
        }
    }

    pub fn backends(&self, seed: u64) -> Backends {
        let chats = self.chats.clone();
        Backends {
            classifier: self.classifier.clone(),
            transcriber: self.transcriber.clone(),
            phonemizer: self.phonemizer.clone(),
            chat: Arc::new(move || {
                let chat = Arc::new(offline_chat(seed));
                chats.lock().unwrap().push(chat.clone());
                chat as Arc<dyn ChatBackend>
            }),
        }
    }

    pub fn chat_calls(&self) -> usize {
        self.chats.lock().unwrap().iter().map(|c| c.calls()).sum()
    }
}

pub fn open(dir: &TempDir, backends: Backends) -> Arc<Service> {
    Service::open(dir.path(), backends, Settings::default()).unwrap().0
}

pub fn mock_service(dir: &TempDir) -> (Arc<Service>, Rig) {
    let rig = Rig::new(SEED);
    (open(dir, rig.backends(SEED)), rig)
}

pub async fn run(svc: &Arc<Service>, meta: SubmissionMeta, wav: &[u8]) -> (Uuid, SessionRecord) {
    let id = svc.submit(meta, wav).unwrap();
    let record = svc.wait_idle(id, WAIT).await.unwrap();
    (id, record)
}

/// Binds the router to an ephemeral port and returns its base URL.
pub async fn serve(svc: Arc<Service>) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, api::router(svc)).await.unwrap() });
    format!("http://{addr}")
}

pub fn multipart(meta: &serde_json::Value, wav: Vec<u8>) -> reqwest::multipart::Form {
    reqwest::multipart::Form::new()
        .text("metadata", meta.to_string())
        .part("audio", reqwest::multipart::Part::bytes(wav).file_name("sample.wav").mime_str("audio/wav").unwrap())
}

pub async fn poll_until_idle(http: &reqwest::Client, base: &str, id: &str) -> serde_json::Value {
    let deadline = tokio::time::Instant::now() + WAIT;
    loop {
        let s: serde_json::Value =
            http.get(format!("{base}/api/sessions/{id}")).send().await.unwrap().json().await.unwrap();
        let state = s["lifecycle"]["state"].as_str().unwrap().to_owned();
        if !["queued", "processing", "revising"].contains(&state.as_str()) {
            return s;
        }
        assert!(tokio::time::Instant::now() < deadline, "stuck in {state}");
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
}

/// Classifier that never answers until released.
#[derive(Default)]
pub struct Stalled {
    pub release: Notify,
}

#[async_trait]
impl ClassifierBackend for Stalled {
    async fn classify(&self, _: &Chunk) -> Result<LabelProbs, BackendFailure> {
        self.release.notified().await;
        Err(BackendFailure::new(FailureKind::Network, "released"))
    }
}

pub struct Down;

#[async_trait]
impl ClassifierBackend for Down {
    async fn classify(&self, _: &Chunk) -> Result<LabelProbs, BackendFailure> {
        Err(BackendFailure::new(FailureKind::Network, "connection refused"))
    }
}
