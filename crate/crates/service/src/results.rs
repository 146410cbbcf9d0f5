//! The result document served to the console and rendered by the exporter.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use uuid::Uuid;
use vst_core::orchestrator::LoopStatus;
use vst_core::review::{AuditEntry, ReviewStatus};
use vst_core::{
    AgentRole, GenerationRecord, OverallClassification, PatientProfile, SegmentationConfig, StutterLabel,
    TherapyPlan,
};

use crate::session::{Lifecycle, Mode, SessionRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TypeShare {
    pub label: StutterLabel,
    pub count: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AnalysisSummary {
    pub duration_s: f64,
    pub sample_rate_hz: u32,
    pub chunk_count: usize,
    pub segmentation: SegmentationConfig,
    /// Top-label counts over all chunks, in label order; fractions sum to 1.
    pub type_distribution: Vec<TypeShare>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChunkRecord {
    pub index: usize,
    pub start_s: f64,
    pub end_s: f64,
    #[serde(rename = "type")]
    pub label: StutterLabel,
    pub confidence: f64,
    pub label_probs: vst_core::LabelProbs,
    pub transcript: Option<String>,
    pub phonemes: Option<Vec<String>>,
    pub audio_url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReviewSummary {
    pub status: ReviewStatus,
    pub modification_count: u32,
    pub max_modifications: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ResultDocument {
    pub session_id: Uuid,
    pub mode: Mode,
    pub lifecycle: Lifecycle,
    pub created_at: DateTime<Utc>,
    pub patient: PatientProfile,
    pub analysis_summary: AnalysisSummary,
    pub overall_classification: Option<OverallClassification>,
    pub chunks: Vec<ChunkRecord>,
    pub plan: Option<TherapyPlan>,
    pub red_flag: bool,
    pub loop_status: Option<LoopStatus>,
    pub critic_texts: Vec<String>,
    pub generation_history: Vec<GenerationRecord>,
    pub review: ReviewSummary,
    pub audit_log: Vec<AuditEntry>,
}

pub fn chunk_audio_url(id: Uuid, index: usize) -> String {
    format!("/api/sessions/{id}/chunks/{index}/audio")
}

impl ResultDocument {
    pub fn build(r: &SessionRecord) -> Self {
        let total = r.analyses.len();
        let type_distribution = StutterLabel::ALL
            .into_iter()
            .map(|label| {
                let count = r.analyses.iter().filter(|a| a.top_label == label).count();
                let fraction = if total == 0 { 0.0 } else { count as f64 / total as f64 };
                TypeShare { label, count, fraction }
            })
            .collect();
        let chunks = r
            .analyses
            .iter()
            .map(|a| ChunkRecord {
                index: a.chunk_index,
                start_s: a.start_s,
                end_s: a.end_s,
                label: a.top_label,
                confidence: a.confidence,
                label_probs: a.label_probs.clone(),
                transcript: a.transcript.clone(),
                phonemes: a.phonemes.clone(),
                audio_url: chunk_audio_url(r.id, a.chunk_index),
            })
            .collect();
        Self {
            session_id: r.id,
            mode: r.mode,
            lifecycle: r.lifecycle.clone(),
            created_at: r.created_at,
            patient: r.patient.clone(),
            analysis_summary: AnalysisSummary {
                duration_s: r.audio.duration_s,
                sample_rate_hz: r.audio.sample_rate_hz,
                chunk_count: r.chunks.len(),
                segmentation: r.seg_config,
                type_distribution,
            },
            overall_classification: r.classification.clone(),
            chunks,
            plan: r.plan.clone(),
            red_flag: r.plan.as_ref().is_some_and(|p| p.urgent_flag),
            loop_status: r.loop_status.clone(),
            critic_texts: r
                .history
                .iter()
                .filter(|h| h.role == AgentRole::Critic)
                .map(|h| h.raw_output.clone())
                .collect(),
            generation_history: r.history.clone(),
            review: ReviewSummary {
                status: r.review.status,
                modification_count: r.review.modification_count,
                max_modifications: r.review.max_modifications,
            },
            audit_log: r.review.audit_log.clone(),
        }
    }

    pub fn is_approved(&self) -> bool {
        self.lifecycle == Lifecycle::Approved
    }
}
