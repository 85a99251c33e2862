//! Human override records. The only write path the operator has into a campaign.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::candidate::{transition, CandidateError, Event, EventKind, Stage};
use crate::state::{CampaignState, NotificationKind};
use crate::validation::cvss::SeverityVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverrideAction {
    Resurrect,
    ForceKill,
    SetSeverity,
    ApproveDisclosure,
}

impl OverrideAction {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().replace('-', "_").as_str() {
            "resurrect" => Some(Self::Resurrect),
            "force_kill" => Some(Self::ForceKill),
            "set_severity" => Some(Self::SetSeverity),
            "approve_disclosure" => Some(Self::ApproveDisclosure),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverrideRecord {
    pub override_id: String,
    pub operator_id: String,
    pub action: OverrideAction,
    pub candidate_id: String,
    pub justification: String,
    pub timestamp: u64,
    pub human_channel: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_stage: Option<Stage>,
    /// Replacement severity for `set_severity`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub severity_vector: Option<SeverityVector>,
}

/// Override as submitted by an operator, before the campaign stamps it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverrideRequest {
    pub operator_id: String,
    pub action: OverrideAction,
    pub candidate_id: String,
    pub justification: String,
    #[serde(default)]
    pub target_stage: Option<Stage>,
    /// CVSS v3.1 base vector for `set_severity`.
    #[serde(default)]
    pub severity_vector: Option<String>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OverrideError {
    #[error("justification is empty")]
    EmptyJustification,
    #[error("unknown candidate {0}")]
    UnknownCandidate(String),
    #[error("severity override needs a Stage-C decision first")]
    NoSeverityYet,
    #[error("malformed vector: {0}")]
    MalformedVector(String),
    #[error(transparent)]
    Candidate(#[from] CandidateError),
}

impl OverrideError {
    pub fn code(&self) -> &'static str {
        match self {
            OverrideError::EmptyJustification => "EmptyJustification",
            OverrideError::UnknownCandidate(_) => "UnknownCandidate",
            OverrideError::NoSeverityYet => "NoSeverityYet",
            OverrideError::MalformedVector(_) => "MalformedVector",
            OverrideError::Candidate(e) => e.code(),
        }
    }
}

/// Validate and apply an operator override. CLI and API both go through
/// here, so their ledger entries are identical apart from timestamps.
pub fn apply_override(
    state: &mut CampaignState,
    request: OverrideRequest,
    timestamp: u64,
) -> Result<OverrideRecord, OverrideError> {
    if request.justification.trim().is_empty() {
        return Err(OverrideError::EmptyJustification);
    }
    let cid = request.candidate_id.clone();
    let candidate = state
        .candidates
        .get(&cid)
        .ok_or_else(|| OverrideError::UnknownCandidate(cid.clone()))?;
    let severity_vector = match (request.action, &request.severity_vector) {
        (OverrideAction::SetSeverity, v) => {
            if !state.decisions_for(&cid).any(|d| d.stage == Stage::C) {
                return Err(OverrideError::NoSeverityYet);
            }
            let v = v.as_deref().unwrap_or_default();
            Some(SeverityVector::from_vector(v).map_err(|e| OverrideError::MalformedVector(e.to_string()))?)
        }
        _ => None,
    };
    let target_stage = match request.action {
        OverrideAction::Resurrect => Some(request.target_stage.unwrap_or(Stage::A)),
        _ => None,
    };
    // Dry-run the transition so a rejected override leaves no trace.
    let override_id = format!("o{:06}", state.meta.counters.overrides + 1);
    let event = Event {
        seq: candidate.next_seq(),
        timestamp,
        kind: EventKind::Overridden {
            action: request.action,
            target_stage,
            human_channel: true,
        },
        payload_ref: override_id.clone(),
    };
    transition(candidate, event.clone())?;

    let id = state.next_id("o");
    debug_assert_eq!(id, override_id);
    let record = OverrideRecord {
        override_id,
        operator_id: request.operator_id,
        action: request.action,
        candidate_id: cid.clone(),
        justification: request.justification,
        timestamp,
        human_channel: true,
        target_stage,
        severity_vector,
    };
    state.append_event(&cid, event.kind, record.override_id.clone(), timestamp)?;
    state.overrides.push(record.clone());
    let meta = &mut state.meta;
    if matches!(request.action, OverrideAction::ForceKill | OverrideAction::Resurrect) {
        meta.parked.retain(|c| c != &cid);
        meta.deferred.retain(|c| c != &cid);
        meta.queue.retain(|c| c != &cid);
    }
    if request.action == OverrideAction::Resurrect {
        meta.queue.push_back(cid.clone());
        meta.finished = false;
    }
    state.notify(
        NotificationKind::OverrideApplied,
        Some(&cid),
        format!("{} {:?} by {}", record.override_id, record.action, record.operator_id),
        timestamp,
    );
    Ok(record)
}
