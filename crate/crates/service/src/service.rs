//! Session lifecycle: submission, background processing, upgrade, review and revision.

use std::sync::Arc;

use chrono::Utc;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use uuid::Uuid;
use vst_core::analysis::{
    aggregate, classify_all, enrich, phoneme_correlation, ClassifierBackend, PhonemizerBackend,
    SeverityThresholds, TranscriberBackend,
};
use vst_core::llm::ChatBackend;
use vst_core::orchestrator::{
    apply_human_revision, run_loop_observed, LoopEvent, OrchestrationConfig, OrchestratorError,
};
use vst_core::prompts::PromptContext;
use vst_core::review::{Effect, ReviewAction, ReviewError};
use vst_core::segmenter::{chunk_at, segment};
use vst_core::wav::{decode_wav, encode_wav};
use vst_core::{AudioClip, Chunk, ChunkAnalysis, PatientProfile, SegmentationConfig, DEFAULT_LOCALES};

use crate::results::ResultDocument;
use crate::session::{AudioSummary, Lifecycle, Mode, SessionEvent, SessionRecord, Stage};
use crate::store::{Recovery, SessionStore, StoreError};

pub type ChatFactory = Arc<dyn Fn() -> Arc<dyn ChatBackend> + Send + Sync>;

/// Backends are created once and shared by every session. Chat clients come
/// from a factory so scripted models can keep per-session state.
#[derive(Clone)]
pub struct Backends {
    pub classifier: Arc<dyn ClassifierBackend>,
    pub transcriber: Arc<dyn TranscriberBackend>,
    pub phonemizer: Arc<dyn PhonemizerBackend>,
    pub chat: ChatFactory,
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub default_rounds: u32,
    pub max_modifications: u32,
    pub fan_out: usize,
    pub thresholds: SeverityThresholds,
    pub locales: Vec<String>,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            default_rounds: 2,
            max_modifications: 1,
            fan_out: vst_core::analysis::DEFAULT_FAN_OUT,
            thresholds: SeverityThresholds::default(),
            locales: DEFAULT_LOCALES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("bad audio: {0}")]
    BadAudio(String),
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error("session {0} not found")]
    NotFound(Uuid),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("chunk {index} out of range (session has {count})")]
    ChunkOutOfRange { index: usize, count: usize },
    #[error(transparent)]
    Review(#[from] ReviewError),
    #[error("storage: {0}")]
    Storage(String),
}

impl From<StoreError> for ServiceError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(id) => ServiceError::NotFound(id),
            other => ServiceError::Storage(other.to_string()),
        }
    }
}

/// Submission metadata sent next to the audio file.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SubmissionMeta {
    pub mode: Mode,
    #[serde(default)]
    pub patient: PatientProfile,
    #[serde(default)]
    pub segmentation: Option<Value>,
    #[serde(default)]
    pub orchestration: Option<Value>,
}

impl SubmissionMeta {
    pub fn new(mode: Mode, patient: PatientProfile) -> Self {
        Self { mode, patient, segmentation: None, orchestration: None }
    }
}

fn progress_of(event: LoopEvent) -> f64 {
    // the generation phase spans 0.5..0.95
    let total = 1 + 2 * event.total_rounds;
    let step = match event.role {
        vst_core::AgentRole::TherapyInitial | vst_core::AgentRole::HumanRevision => 0,
        vst_core::AgentRole::Critic => 2 * event.loop_round - 1,
        vst_core::AgentRole::Refine => 2 * event.loop_round,
    };
    0.5 + 0.45 * step as f64 / total as f64
}

fn loop_message(event: LoopEvent) -> String {
    match event.role {
        vst_core::AgentRole::TherapyInitial => "drafting therapy plan".into(),
        vst_core::AgentRole::HumanRevision => "revising plan from clinician feedback".into(),
        role => format!("{} round {} of {}", role, event.loop_round, event.total_rounds),
    }
}

pub struct Service {
    store: SessionStore,
    backends: Backends,
    settings: Settings,
}

impl Service {
    pub fn open(
        data_dir: impl Into<std::path::PathBuf>,
        backends: Backends,
        settings: Settings,
    ) -> Result<(Arc<Self>, Recovery), ServiceError> {
        let (store, recovery) = SessionStore::open(data_dir)?;
        Ok((Arc::new(Self { store, backends, settings }), recovery))
    }

    pub fn store(&self) -> &SessionStore {
        &self.store
    }

    pub fn settings(&self) -> &Settings {
        &self.settings
    }

    fn parse_configs(&self, meta: &SubmissionMeta) -> Result<(SegmentationConfig, OrchestrationConfig), ServiceError> {
        let seg = match &meta.segmentation {
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| ServiceError::BadConfig(e.to_string()))?,
            None => SegmentationConfig::default(),
        };
        let mut orch = meta.orchestration.clone().unwrap_or_else(|| Value::Object(Default::default()));
        let obj = orch
            .as_object_mut()
            .ok_or_else(|| ServiceError::BadConfig("orchestration must be an object".into()))?;
        obj.entry("rounds").or_insert(self.settings.default_rounds.into());
        let orch = serde_json::from_value(orch).map_err(|e| ServiceError::BadConfig(e.to_string()))?;
        meta.patient.validate(&self.settings.locales).map_err(|e| ServiceError::BadConfig(e.to_string()))?;
        Ok((seg, orch))
    }

    /// Validates and stores a submission, then starts processing in the background.
    pub fn submit(self: &Arc<Self>, meta: SubmissionMeta, wav: &[u8]) -> Result<Uuid, ServiceError> {
        let clip = decode_wav(wav).map_err(|e| ServiceError::BadAudio(e.to_string()))?;
        if clip.is_empty() {
            return Err(ServiceError::BadAudio("no samples".into()));
        }
        let (seg_config, orch_config) = self.parse_configs(&meta)?;
        let id = Uuid::new_v4();
        let record = SessionRecord {
            id,
            mode: meta.mode,
            lifecycle: Lifecycle::Queued,
            patient: meta.patient,
            seg_config,
            orch_config,
            audio: AudioSummary {
                duration_s: clip.duration_s(),
                sample_rate_hz: clip.sample_rate_hz(),
                sample_count: clip.samples().len(),
            },
            chunks: Vec::new(),
            analyses: Vec::new(),
            classification: None,
            plan: None,
            loop_status: None,
            history: Vec::new(),
            review: vst_core::review::ReviewState::new(self.settings.max_modifications),
            last_event: None,
            created_at: Utc::now(),
        };
        self.store.create(record, wav)?;
        tracing::info!(%id, mode = ?meta.mode, "session queued");
        let this = self.clone();
        tokio::spawn(async move { this.process(id, clip).await });
        Ok(id)
    }

    async fn process(self: Arc<Self>, id: Uuid, clip: AudioClip) {
        if let Err(reason) = self.run_pipeline(id, &clip).await {
            tracing::warn!(%id, %reason, "session failed");
            let _ = self.store.record(id, vec![SessionEvent::Lifecycle { lifecycle: Lifecycle::Failed { reason } }]);
        }
    }

    fn step(&self, id: Uuid, stage: Stage, progress: f64, message: &str) -> Result<(), String> {
        self.store.progress(id, stage, progress, message).map_err(|e| e.to_string())
    }

    async fn run_pipeline(&self, id: Uuid, clip: &AudioClip) -> Result<(), String> {
        let record = self.store.get(id).map_err(|e| e.to_string())?;
        self.step(id, Stage::Segmenting, 0.0, "segmenting audio")?;
        let chunks = segment(clip, &record.seg_config).map_err(|e| format!("segmentation failed: {e}"))?;
        self.store
            .record(id, vec![SessionEvent::Segmented { chunks: chunks.iter().map(Chunk::info).collect() }])
            .map_err(|e| e.to_string())?;

        self.step(id, Stage::Classifying, 0.05, &format!("classifying {} chunks", chunks.len()))?;
        let mut analyses = classify_all(&chunks, self.backends.classifier.as_ref(), self.settings.fan_out)
            .await
            .map_err(|e| format!("classification failed: {e}"))?;

        match record.mode {
            Mode::ClassificationOnly => {
                let classification =
                    aggregate(&analyses, &self.settings.thresholds).map_err(|e| e.to_string())?;
                self.step(id, Stage::Exporting, 0.95, "assembling results")?;
                self.store
                    .record(id, vec![
                        SessionEvent::Analysed { analyses, classification },
                        SessionEvent::Lifecycle { lifecycle: Lifecycle::ResultsReady },
                    ])
                    .map_err(|e| e.to_string())?;
                Ok(())
            }
            Mode::Full => {
                self.enrich_and_plan(id, &record, &chunks, &mut analyses).await
            }
        }
    }

    /// Transcription, phonemes, aggregation and the generation loop.
    async fn enrich_and_plan(
        &self,
        id: Uuid,
        record: &SessionRecord,
        chunks: &[Chunk],
        analyses: &mut [ChunkAnalysis],
    ) -> Result<(), String> {
        self.step(id, Stage::Transcribing, 0.35, "transcribing and phonemizing chunks")?;
        enrich(
            chunks,
            analyses,
            self.backends.transcriber.as_ref(),
            self.backends.phonemizer.as_ref(),
            self.settings.fan_out,
        )
        .await
        .map_err(|e| format!("transcription failed: {e}"))?;
        let classification = aggregate(analyses, &self.settings.thresholds).map_err(|e| e.to_string())?;
        let correlation = phoneme_correlation(analyses);
        self.store
            .record(id, vec![SessionEvent::Analysed { analyses: analyses.to_vec(), classification: classification.clone() }])
            .map_err(|e| e.to_string())?;

        let ctx = PromptContext::new(record.patient.clone(), classification)
            .with_chunks(analyses.to_vec())
            .with_correlation(correlation);
        let chat = (self.backends.chat)();
        let observe = |e: LoopEvent| {
            let _ = self.store.progress(id, Stage::for_role(e.role), progress_of(e), loop_message(e));
        };
        match run_loop_observed(&ctx, &record.orch_config, chat.as_ref(), &observe).await {
            Ok(out) => {
                self.step(id, Stage::Exporting, 0.97, "assembling results")?;
                self.store
                    .record(id, vec![
                        SessionEvent::Planned {
                            plan: Some(out.final_plan),
                            records: out.history,
                            loop_status: Some(out.status),
                        },
                        SessionEvent::Lifecycle { lifecycle: Lifecycle::PendingReview },
                    ])
                    .map_err(|e| e.to_string())?;
                Ok(())
            }
            Err(e) => {
                let records = e.history().to_vec();
                if !records.is_empty() {
                    let _ = self.store.record(id, vec![SessionEvent::Planned { plan: None, records, loop_status: None }]);
                }
                Err(format!("plan generation failed: {e}"))
            }
        }
    }

    /// Turns a classification-only session into a full one, reusing its stored
    /// chunk classifications.
    pub fn upgrade(self: &Arc<Self>, id: Uuid) -> Result<Lifecycle, ServiceError> {
        let record = self.store.update(id, |r| {
            if r.mode != Mode::ClassificationOnly {
                return Err(ServiceError::InvalidState("session already runs in full mode".into()));
            }
            if r.lifecycle != Lifecycle::ResultsReady {
                return Err(ServiceError::InvalidState(format!("cannot upgrade a {} session", r.lifecycle.as_str())));
            }
            Ok(vec![
                SessionEvent::ModeChanged { mode: Mode::Full },
                SessionEvent::Lifecycle { lifecycle: Lifecycle::Processing { stage: Stage::Transcribing, progress: 0.0 } },
            ])
        })?;
        let this = self.clone();
        tokio::spawn(async move {
            if let Err(reason) = this.run_upgrade(&record).await {
                tracing::warn!(%id, %reason, "upgrade failed");
                let _ = this.store.record(id, vec![SessionEvent::Lifecycle { lifecycle: Lifecycle::Failed { reason } }]);
            }
        });
        Ok(Lifecycle::Processing { stage: Stage::Transcribing, progress: 0.0 })
    }

    async fn run_upgrade(&self, record: &SessionRecord) -> Result<(), String> {
        let clip = self.load_clip(record.id).map_err(|e| e.to_string())?;
        let chunks = segment(&clip, &record.seg_config).map_err(|e| e.to_string())?;
        let mut analyses = record.analyses.clone();
        self.enrich_and_plan(record.id, record, &chunks, &mut analyses).await
    }

    fn load_clip(&self, id: Uuid) -> Result<AudioClip, ServiceError> {
        let bytes = std::fs::read(self.store.audio_path(id)).map_err(|e| ServiceError::Storage(e.to_string()))?;
        decode_wav(&bytes).map_err(|e| ServiceError::Storage(format!("stored audio unreadable: {e}")))
    }

    /// Applies a clinician action. A modification schedules a revision and
    /// returns `Revising` immediately.
    pub fn review(self: &Arc<Self>, id: Uuid, mut action: ReviewAction) -> Result<Lifecycle, ServiceError> {
        // the server clock is the audit clock
        action.timestamp = Utc::now();
        let mut effect = None;
        let record = self.store.update(id, |r| {
            if !matches!(
                r.lifecycle,
                Lifecycle::PendingReview | Lifecycle::Revising | Lifecycle::Approved | Lifecycle::Rejected
            ) {
                return Err(ServiceError::InvalidState(format!(
                    "session is {}; review needs a generated plan",
                    r.lifecycle.as_str()
                )));
            }
            let plan = r.plan.as_ref().ok_or_else(|| ServiceError::InvalidState("no plan".into()))?;
            let mut review = r.review.clone();
            effect = Some(review.apply(&action, plan)?);
            Ok(vec![SessionEvent::Reviewed { review }])
        })?;
        if let Some(Effect::ScheduleRevision { feedback }) = effect {
            let this = self.clone();
            tokio::spawn(async move { this.revise(id, feedback).await });
        }
        Ok(record.lifecycle)
    }

    async fn revise(self: Arc<Self>, id: Uuid, feedback: String) {
        let Ok(record) = self.store.get(id) else { return };
        let (Some(plan), Some(classification)) = (record.plan.clone(), record.classification.clone()) else {
            return;
        };
        let ctx = PromptContext::new(record.patient.clone(), classification)
            .with_chunks(record.analyses.clone())
            .with_correlation(phoneme_correlation(&record.analyses));
        let chat = (self.backends.chat)();
        let next = record.history.len() as u32;
        let outcome =
            apply_human_revision(&plan, &feedback, &ctx, &record.orch_config, chat.as_ref(), next).await;
        let _ = self.store.update(id, |r| {
            let mut review = r.review.clone();
            let (plan, records) = match outcome {
                Ok(out) => {
                    review.complete_revision()?;
                    (Some(out.final_plan), out.history)
                }
                Err(e) => {
                    tracing::warn!(%id, error = %e, "revision failed; previous plan kept");
                    review.fail_revision()?;
                    let records = match e {
                        OrchestratorError::RefinementFailed { history, .. }
                        | OrchestratorError::GenerationFailed { history, .. } => history,
                        _ => Vec::new(),
                    };
                    (None, records)
                }
            };
            Ok::<_, ServiceError>(vec![
                SessionEvent::Planned { plan, records, loop_status: None },
                SessionEvent::Reviewed { review },
            ])
        });
    }

    pub fn results(&self, id: Uuid) -> Result<ResultDocument, ServiceError> {
        let record = self.store.get(id)?;
        if !record.lifecycle.has_results() {
            return Err(ServiceError::InvalidState(format!("no results while {}", record.lifecycle.as_str())));
        }
        Ok(ResultDocument::build(&record))
    }

    /// WAV bytes of the samples behind chunk `index`.
    pub fn chunk_audio(&self, id: Uuid, index: usize) -> Result<Vec<u8>, ServiceError> {
        let record = self.store.get(id)?;
        if record.chunks.is_empty() {
            return Err(ServiceError::InvalidState("audio has not been segmented yet".into()));
        }
        if index >= record.chunks.len() {
            return Err(ServiceError::ChunkOutOfRange { index, count: record.chunks.len() });
        }
        let clip = self.load_clip(id)?;
        let chunk = chunk_at(&clip, &record.seg_config, index)
            .ok_or(ServiceError::ChunkOutOfRange { index, count: record.chunks.len() })?;
        Ok(encode_wav(chunk.valid(), chunk.sample_rate_hz))
    }

    pub fn export_html(&self, id: Uuid) -> Result<String, ServiceError> {
        let doc = self.results(id)?;
        Ok(crate::export::render(&doc))
    }

    /// Whether the session is settled, i.e. nothing is running for it.
    pub fn is_idle(&self, id: Uuid) -> Result<bool, ServiceError> {
        Ok(!self.store.get(id)?.lifecycle.is_busy())
    }

    /// Polls until the session is idle. For tests and the CLI.
    pub async fn wait_idle(&self, id: Uuid, timeout: std::time::Duration) -> Result<SessionRecord, ServiceError> {
        let deadline = tokio::time::Instant::now() + timeout;
        loop {
            let r = self.store.get(id)?;
            if !r.lifecycle.is_busy() {
                return Ok(r);
            }
            if tokio::time::Instant::now() >= deadline {
                return Err(ServiceError::InvalidState(format!("still {} after {timeout:?}", r.lifecycle.as_str())));
            }
            tokio::time::sleep(std::time::Duration::from_millis(5)).await;
        }
    }
}
