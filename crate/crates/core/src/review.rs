//! Clinician review state machine and audit trail.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plan::{validate_plan, TherapyPlan, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReviewStatus {
    PendingReview,
    Revising,
    Approved,
    Rejected,
}

impl ReviewStatus {
    pub const ALL: [ReviewStatus; 4] =
        [ReviewStatus::PendingReview, ReviewStatus::Revising, ReviewStatus::Approved, ReviewStatus::Rejected];

    pub fn is_terminal(self) -> bool {
        matches!(self, ReviewStatus::Approved | ReviewStatus::Rejected)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ReviewStatus::PendingReview => "pending_review",
            ReviewStatus::Revising => "revising",
            ReviewStatus::Approved => "approved",
            ReviewStatus::Rejected => "rejected",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Approve,
    Reject,
    Modify,
}

impl ActionKind {
    pub const ALL: [ActionKind; 3] = [ActionKind::Approve, ActionKind::Reject, ActionKind::Modify];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::Approve => "approve",
            ActionKind::Reject => "reject",
            ActionKind::Modify => "modify",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReviewAction {
    pub action: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<String>,
    pub clinician_id: String,
    #[serde(default = "Utc::now")]
    pub timestamp: DateTime<Utc>,
}

impl ReviewAction {
    pub fn new(action: ActionKind, clinician_id: impl Into<String>) -> Self {
        Self { action, feedback: None, clinician_id: clinician_id.into(), timestamp: Utc::now() }
    }

    pub fn modify(clinician_id: impl Into<String>, feedback: impl Into<String>) -> Self {
        Self { feedback: Some(feedback.into()), ..Self::new(ActionKind::Modify, clinician_id) }
    }

    pub fn at(mut self, timestamp: DateTime<Utc>) -> Self {
        self.timestamp = timestamp;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AuditEntry {
    pub timestamp: DateTime<Utc>,
    pub clinician_id: String,
    pub action: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<String>,
    pub resulting_state: ReviewStatus,
}

/// What the caller must do after an accepted action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Effect {
    /// Plan is final and may be exported.
    Finalize,
    Terminate,
    /// Run one human revision with this feedback, then call
    /// [`ReviewState::complete_revision`].
    ScheduleRevision { feedback: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidReason {
    Terminal,
    RevisionInProgress,
    ModificationLimit,
    NotRevising,
    StaleState,
}

impl InvalidReason {
    pub fn as_str(self) -> &'static str {
        match self {
            InvalidReason::Terminal => "session is in a terminal state",
            InvalidReason::RevisionInProgress => "a revision is in progress",
            InvalidReason::ModificationLimit => "modification limit reached; only approve or reject remain",
            InvalidReason::NotRevising => "no revision is in progress",
            InvalidReason::StaleState => "state changed concurrently",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReviewError {
    #[error("invalid action: {}", .0.as_str())]
    InvalidAction(InvalidReason),
    #[error("modify requires non-empty feedback")]
    MissingFeedback,
    #[error("plan fails validation ({} violation(s))", .0.len())]
    PlanInvalid(Vec<Violation>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReviewState {
    pub status: ReviewStatus,
    pub modification_count: u32,
    pub max_modifications: u32,
    #[serde(default)]
    pub audit_log: Vec<AuditEntry>,
}

impl Default for ReviewState {
    fn default() -> Self {
        Self::new(1)
    }
}

/// Pure transition rule. `plan_violations` is consulted only for approve.
pub fn transition(
    status: ReviewStatus,
    modification_count: u32,
    max_modifications: u32,
    action: ActionKind,
    feedback: Option<&str>,
    plan_violations: &[Violation],
) -> Result<(ReviewStatus, u32), ReviewError> {
    match status {
        ReviewStatus::Approved | ReviewStatus::Rejected => {
            return Err(ReviewError::InvalidAction(InvalidReason::Terminal))
        }
        ReviewStatus::Revising => return Err(ReviewError::InvalidAction(InvalidReason::RevisionInProgress)),
        ReviewStatus::PendingReview => {}
    }
    match action {
        ActionKind::Approve if !plan_violations.is_empty() => {
            Err(ReviewError::PlanInvalid(plan_violations.to_vec()))
        }
        ActionKind::Approve => Ok((ReviewStatus::Approved, modification_count)),
        ActionKind::Reject => Ok((ReviewStatus::Rejected, modification_count)),
        ActionKind::Modify => {
            if feedback.is_none_or(|f| f.trim().is_empty()) {
                Err(ReviewError::MissingFeedback)
            } else if modification_count >= max_modifications {
                Err(ReviewError::InvalidAction(InvalidReason::ModificationLimit))
            } else {
                Ok((ReviewStatus::Revising, modification_count + 1))
            }
        }
    }
}

impl ReviewState {
    pub fn new(max_modifications: u32) -> Self {
        Self {
            status: ReviewStatus::PendingReview,
            modification_count: 0,
            max_modifications,
            audit_log: Vec::new(),
        }
    }

    /// Applies a clinician action; appends one audit entry iff accepted.
    pub fn apply(&mut self, action: &ReviewAction, plan: &TherapyPlan) -> Result<Effect, ReviewError> {
        let violations =
            if action.action == ActionKind::Approve { validate_plan(plan) } else { Vec::new() };
        let (status, count) = transition(
            self.status,
            self.modification_count,
            self.max_modifications,
            action.action,
            action.feedback.as_deref(),
            &violations,
        )?;
        self.status = status;
        self.modification_count = count;
        // keep the log monotone even if client clocks disagree
        let timestamp = self
            .audit_log
            .last()
            .map_or(action.timestamp, |e| e.timestamp.max(action.timestamp));
        let feedback = action.feedback.as_ref().map(|f| f.trim().to_owned()).filter(|f| !f.is_empty());
        self.audit_log.push(AuditEntry {
            timestamp,
            clinician_id: action.clinician_id.clone(),
            action: action.action,
            feedback: feedback.clone(),
            resulting_state: status,
        });
        Ok(match action.action {
            ActionKind::Approve => Effect::Finalize,
            ActionKind::Reject => Effect::Terminate,
            ActionKind::Modify => Effect::ScheduleRevision { feedback: feedback.expect("validated") },
        })
    }

    /// Revision finished with a new plan.
    pub fn complete_revision(&mut self) -> Result<(), ReviewError> {
        self.leave_revising()
    }

    /// Revision failed; the previous plan stays and the modification is refunded.
    pub fn fail_revision(&mut self) -> Result<(), ReviewError> {
        self.leave_revising()?;
        self.modification_count = self.modification_count.saturating_sub(1);
        Ok(())
    }

    fn leave_revising(&mut self) -> Result<(), ReviewError> {
        if self.status != ReviewStatus::Revising {
            return Err(ReviewError::InvalidAction(InvalidReason::NotRevising));
        }
        self.status = ReviewStatus::PendingReview;
        Ok(())
    }

    pub fn can_modify(&self) -> bool {
        self.status == ReviewStatus::PendingReview && self.modification_count < self.max_modifications
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modify_requires_feedback_before_limit_check() {
        let r = transition(ReviewStatus::PendingReview, 1, 1, ActionKind::Modify, Some(" "), &[]);
        assert_eq!(r, Err(ReviewError::MissingFeedback));
    }

    #[test]
    fn revising_blocks_actions() {
        for a in ActionKind::ALL {
            let r = transition(ReviewStatus::Revising, 1, 1, a, Some("x"), &[]);
            assert_eq!(r, Err(ReviewError::InvalidAction(InvalidReason::RevisionInProgress)));
        }
    }

    #[test]
    fn leaving_revising_only_from_revising() {
        let mut s = ReviewState::new(1);
        assert!(s.complete_revision().is_err());
        s.status = ReviewStatus::Revising;
        s.modification_count = 1;
        s.fail_revision().unwrap();
        assert_eq!((s.status, s.modification_count), (ReviewStatus::PendingReview, 0));
    }
}
