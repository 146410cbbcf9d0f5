//! Session records and the events that build them.
//!
//! A record is never edited in place: every change is a [`SessionEvent`]
//! appended to the session log and then applied with [`SessionRecord::apply`].
//! Replaying the log therefore reproduces the record exactly.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use uuid::Uuid;
use vst_core::orchestrator::{LoopStatus, OrchestrationConfig};
use vst_core::review::{ReviewState, ReviewStatus};
use vst_core::{
    AgentRole, ChunkAnalysis, ChunkInfo, GenerationRecord, OverallClassification, PatientProfile,
    SegmentationConfig, TherapyPlan,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    ClassificationOnly,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Segmenting,
    Classifying,
    Transcribing,
    Generating,
    Critiquing,
    Refining,
    Exporting,
}

impl Stage {
    pub fn for_role(role: AgentRole) -> Self {
        match role {
            AgentRole::TherapyInitial | AgentRole::HumanRevision => Stage::Generating,
            AgentRole::Critic => Stage::Critiquing,
            AgentRole::Refine => Stage::Refining,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressEvent {
    pub stage: Stage,
    pub progress: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum Lifecycle {
    Queued,
    Processing { stage: Stage, progress: f64 },
    ResultsReady,
    PendingReview,
    Revising,
    Approved,
    Rejected,
    Failed { reason: String },
}

impl Lifecycle {
    pub fn as_str(&self) -> &'static str {
        match self {
            Lifecycle::Queued => "queued",
            Lifecycle::Processing { .. } => "processing",
            Lifecycle::ResultsReady => "results_ready",
            Lifecycle::PendingReview => "pending_review",
            Lifecycle::Revising => "revising",
            Lifecycle::Approved => "approved",
            Lifecycle::Rejected => "rejected",
            Lifecycle::Failed { .. } => "failed",
        }
    }

    /// Work is scheduled or running for the session.
    pub fn is_busy(&self) -> bool {
        matches!(self, Lifecycle::Queued | Lifecycle::Processing { .. } | Lifecycle::Revising)
    }

    /// Analysis results exist and can be read.
    pub fn has_results(&self) -> bool {
        matches!(
            self,
            Lifecycle::ResultsReady
                | Lifecycle::PendingReview
                | Lifecycle::Revising
                | Lifecycle::Approved
                | Lifecycle::Rejected
        )
    }

    fn from_review(status: ReviewStatus) -> Self {
        match status {
            ReviewStatus::PendingReview => Lifecycle::PendingReview,
            ReviewStatus::Revising => Lifecycle::Revising,
            ReviewStatus::Approved => Lifecycle::Approved,
            ReviewStatus::Rejected => Lifecycle::Rejected,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AudioSummary {
    pub duration_s: f64,
    pub sample_rate_hz: u32,
    pub sample_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SessionRecord {
    pub id: Uuid,
    pub mode: Mode,
    pub lifecycle: Lifecycle,
    pub patient: PatientProfile,
    pub seg_config: SegmentationConfig,
    pub orch_config: OrchestrationConfig,
    pub audio: AudioSummary,
    pub chunks: Vec<ChunkInfo>,
    pub analyses: Vec<ChunkAnalysis>,
    pub classification: Option<OverallClassification>,
    pub plan: Option<TherapyPlan>,
    pub loop_status: Option<LoopStatus>,
    pub history: Vec<GenerationRecord>,
    pub review: ReviewState,
    pub last_event: Option<ProgressEvent>,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    Created { record: Box<SessionRecord> },
    Progress { update: ProgressEvent },
    Lifecycle { lifecycle: Lifecycle },
    ModeChanged { mode: Mode },
    Segmented { chunks: Vec<ChunkInfo> },
    Analysed { analyses: Vec<ChunkAnalysis>, classification: OverallClassification },
    /// Appends `records`; replaces the plan when one is given.
    Planned {
        plan: Option<TherapyPlan>,
        records: Vec<GenerationRecord>,
        loop_status: Option<LoopStatus>,
    },
    Reviewed { review: ReviewState },
}

/// One line of a session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub at: DateTime<Utc>,
    #[serde(flatten)]
    pub event: SessionEvent,
}

impl SessionRecord {
    pub fn apply(&mut self, event: &SessionEvent) {
        match event {
            SessionEvent::Created { record } => *self = (**record).clone(),
            SessionEvent::Progress { update } => {
                self.lifecycle = Lifecycle::Processing { stage: update.stage, progress: update.progress };
                self.last_event = Some(update.clone());
            }
            SessionEvent::Lifecycle { lifecycle } => self.lifecycle = lifecycle.clone(),
            SessionEvent::ModeChanged { mode } => self.mode = *mode,
            SessionEvent::Segmented { chunks } => self.chunks = chunks.clone(),
            SessionEvent::Analysed { analyses, classification } => {
                self.analyses = analyses.clone();
                self.classification = Some(classification.clone());
            }
            SessionEvent::Planned { plan, records, loop_status } => {
                if let Some(p) = plan {
                    self.plan = Some(p.clone());
                }
                if let Some(s) = loop_status {
                    self.loop_status = Some(s.clone());
                }
                self.history.extend(records.iter().cloned());
            }
            SessionEvent::Reviewed { review } => {
                self.review = review.clone();
                self.lifecycle = Lifecycle::from_review(review.status);
            }
        }
    }

    /// Latest progress value, or 0 before processing starts.
    pub fn progress(&self) -> f64 {
        match &self.lifecycle {
            Lifecycle::Processing { progress, .. } => *progress,
            Lifecycle::Queued => 0.0,
            _ => self.last_event.as_ref().map_or(0.0, |e| e.progress),
        }
    }
}
