//! In-memory campaign state: candidates plus every ledger the audit reads.

use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::agent::{Routing, TaskKind, Tier, Verdict};
use crate::candidate::{Candidate, CandidateError, Event, EventKind, Stage};
use crate::context::{ContextView, ExposureRecord, Fragment, PreparedTarget, ViewKind, ViewPolicy};
use crate::engine::gates::DecisionRecord;
use crate::engine::learnings::Learnings;
use crate::overrides::OverrideRecord;
use crate::rules::Rule;
use crate::validation::{CheckSpec, ValidationResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntakeRecord {
    pub candidate_id: String,
    pub hunter_id: String,
    pub self_critique: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntakeRejection {
    pub wave: u32,
    pub hunter_id: String,
    pub title: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub verdict_id: String,
    pub candidate_id: String,
    pub stage: Option<Stage>,
    pub attempt: u32,
    pub round: u32,
    pub window: u32,
    pub slot: String,
    pub view_kind: Option<ViewKind>,
    pub model_family: String,
    pub tier: Tier,
    pub verdict: Verdict,
    /// Rule ids whose compliance predicate this output violated.
    #[serde(default)]
    pub compliance_flags: Vec<String>,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub validation_id: String,
    pub candidate_id: String,
    pub attempt: u32,
    pub round: u32,
    pub window: u32,
    pub result: ValidationResult,
    /// Empirical gate switched off in configuration; the result is a placeholder.
    #[serde(default)]
    pub gate_disabled: bool,
    /// Local check infeasible; the candidate waits for a remote run.
    #[serde(default)]
    pub deferred: bool,
    #[serde(default)]
    pub remote: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check: Option<CheckSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefusalRecord {
    pub refusal_id: String,
    pub candidate_id: Option<String>,
    pub stage: Option<Stage>,
    pub agent_id: String,
    pub tier: Tier,
    pub task_kind: TaskKind,
    pub reason: String,
    pub routing: Routing,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reassigned_to: Option<String>,
    pub timestamp: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NotificationKind {
    GateDecided,
    UnanimityWarning,
    ColdStartDivergence,
    HumanReview,
    RefusalEscalated,
    ComplianceViolation,
    Contamination,
    ResurrectionSuggested,
    DevelopmentHead,
    ReentryLimit,
    OverrideApplied,
    WaveGenerated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Notification {
    pub seq: u64,
    pub timestamp: u64,
    pub kind: NotificationKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate_id: Option<String>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Escalation {
    pub candidate_id: Option<String>,
    pub stage: Option<Stage>,
    pub agent_id: String,
    pub task_kind: TaskKind,
    pub reason: String,
    pub timestamp: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DispatchCounts {
    /// Candidate-review dispatches; each must have one exposure record.
    pub review: u64,
    pub hunter: u64,
    pub research: u64,
}

impl DispatchCounts {
    pub fn total(&self) -> u64 {
        self.review + self.hunter + self.research
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub verdict: u64,
    pub decision: u64,
    pub validation: u64,
    pub refusal: u64,
    pub notification: u64,
    pub overrides: u64,
    pub exposure: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignMeta {
    pub schema_version: u32,
    pub campaign_id: String,
    pub seed: u64,
    pub view_policy: ViewPolicy,
    /// Highest generation wave so far. Also the current processing window.
    pub wave: u32,
    pub queue: VecDeque<String>,
    /// Candidates waiting for a remote validation in the next window.
    pub deferred: Vec<String>,
    /// Candidates waiting on a human after a senior refusal.
    pub parked: Vec<String>,
    pub completions_since_reseed: u32,
    pub prepared: bool,
    pub finished: bool,
    pub counters: Counters,
    pub dispatches: DispatchCounts,
    pub learnings: Vec<Learnings>,
    #[serde(default)]
    pub target_tags: Vec<String>,
}

impl CampaignMeta {
    pub fn new(campaign_id: impl Into<String>, seed: u64, view_policy: ViewPolicy) -> Self {
        Self {
            schema_version: 1,
            campaign_id: campaign_id.into(),
            seed,
            view_policy,
            wave: 0,
            queue: VecDeque::new(),
            deferred: vec![],
            parked: vec![],
            completions_since_reseed: 0,
            prepared: false,
            finished: false,
            counters: Counters::default(),
            dispatches: DispatchCounts::default(),
            learnings: vec![],
            target_tags: vec![],
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct CampaignState {
    pub meta: CampaignMeta,
    pub prepared: Option<PreparedTarget>,
    pub candidates: BTreeMap<String, Candidate>,
    /// Candidate ids in generation order.
    pub order: Vec<String>,
    pub intake: BTreeMap<String, IntakeRecord>,
    pub intake_rejections: Vec<IntakeRejection>,
    /// View content by digest.
    pub views: BTreeMap<String, Vec<Fragment>>,
    pub exposures: Vec<ExposureRecord>,
    pub verdicts: Vec<VerdictRecord>,
    pub decisions: Vec<DecisionRecord>,
    pub validations: Vec<ValidationRecord>,
    pub refusals: Vec<RefusalRecord>,
    pub notifications: Vec<Notification>,
    pub overrides: Vec<OverrideRecord>,
    pub escalations: Vec<Escalation>,
    pub rules: Vec<Rule>,
    /// Transcript bodies by reference, held until the store writes them out.
    pub transcripts: BTreeMap<String, String>,
    verdict_index: HashMap<String, usize>,
    by_candidate: HashMap<String, Vec<usize>>,
}

impl Default for CampaignMeta {
    fn default() -> Self {
        Self::new("campaign", 0, ViewPolicy::default())
    }
}

impl CampaignState {
    pub fn new(meta: CampaignMeta) -> Self {
        Self {
            meta,
            ..Self::default()
        }
    }

    pub fn campaign_id(&self) -> &str {
        &self.meta.campaign_id
    }

    pub fn rebuild_indexes(&mut self) {
        self.verdict_index.clear();
        self.by_candidate.clear();
        for (i, v) in self.verdicts.iter().enumerate() {
            self.verdict_index.insert(v.verdict_id.clone(), i);
            self.by_candidate.entry(v.candidate_id.clone()).or_default().push(i);
        }
    }

    pub fn next_id(&mut self, prefix: &str) -> String {
        let c = &mut self.meta.counters;
        let n = match prefix {
            "v" => &mut c.verdict,
            "d" => &mut c.decision,
            "val" => &mut c.validation,
            "r" => &mut c.refusal,
            "o" => &mut c.overrides,
            _ => &mut c.notification,
        };
        *n += 1;
        format!("{prefix}{:06}", *n)
    }

    pub fn add_candidate(&mut self, candidate: Candidate, intake: IntakeRecord) {
        self.order.push(candidate.id.clone());
        self.intake.insert(candidate.id.clone(), intake);
        self.candidates.insert(candidate.id.clone(), candidate);
    }

    /// Apply a new event to a candidate, assigning the next sequence number.
    pub fn append_event(
        &mut self,
        candidate_id: &str,
        kind: EventKind,
        payload_ref: impl Into<String>,
        timestamp: u64,
    ) -> Result<(), CandidateError> {
        let candidate = self
            .candidates
            .get_mut(candidate_id)
            .ok_or_else(|| CandidateError::InvalidClaim(format!("unknown candidate {candidate_id}")))?;
        let event = Event {
            seq: candidate.next_seq(),
            timestamp,
            kind,
            payload_ref: payload_ref.into(),
        };
        candidate.apply(event)
    }

    pub fn push_verdict(&mut self, record: VerdictRecord) {
        let i = self.verdicts.len();
        self.verdict_index.insert(record.verdict_id.clone(), i);
        self.by_candidate.entry(record.candidate_id.clone()).or_default().push(i);
        self.verdicts.push(record);
    }

    pub fn verdict(&self, verdict_id: &str) -> Option<&VerdictRecord> {
        self.verdict_index.get(verdict_id).map(|&i| &self.verdicts[i])
    }

    pub fn verdicts_for(&self, candidate_id: &str) -> Vec<&VerdictRecord> {
        self.by_candidate
            .get(candidate_id)
            .map(|ix| ix.iter().map(|&i| &self.verdicts[i]).collect())
            .unwrap_or_default()
    }

    pub fn record_exposure(
        &mut self,
        agent_id: &str,
        view: &ContextView,
        stage: Option<Stage>,
        role: crate::agent::Role,
        timestamp: u64,
    ) -> ExposureRecord {
        self.views
            .entry(view.content_digest.clone())
            .or_insert_with(|| view.content.clone());
        self.meta.counters.exposure += 1;
        let record = ExposureRecord {
            seq: self.meta.counters.exposure,
            agent_id: agent_id.to_string(),
            candidate_id: view.candidate_id.clone(),
            view_kind: view.kind,
            content_digest: view.content_digest.clone(),
            timestamp,
            stage,
            role,
        };
        self.exposures.push(record.clone());
        record
    }

    pub fn notify(
        &mut self,
        kind: NotificationKind,
        candidate_id: Option<&str>,
        detail: impl Into<String>,
        timestamp: u64,
    ) {
        self.meta.counters.notification += 1;
        self.notifications.push(Notification {
            seq: self.meta.counters.notification,
            timestamp,
            kind,
            candidate_id: candidate_id.map(String::from),
            detail: detail.into(),
        });
    }

    pub fn refusal_rate(&self) -> Option<f64> {
        let total = self.meta.dispatches.total();
        (total > 0).then(|| self.refusals.len() as f64 / total as f64)
    }

    pub fn decisions_for<'a>(&'a self, candidate_id: &'a str) -> impl Iterator<Item = &'a DecisionRecord> + 'a {
        self.decisions.iter().filter(move |d| d.candidate_id == candidate_id)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::agent::{Direction, Exploitation, Role};
    use crate::candidate::{CandidateHeader, Claim, DefectClass, Origin, SourceStratum, TargetRef};

    pub(crate) fn verdict(role: Role, direction: Direction, rationale: &str) -> Verdict {
        Verdict {
            agent_id: format!("{}-agent", role.as_str()),
            role,
            direction,
            rationale: rationale.into(),
            evidence_refs: vec!["src/parse.c:120".into()],
            code_grounded: (direction == Direction::Kill).then_some(true),
            confidence: 0.8,
            exploitation: (role == Role::Creative && direction == Direction::Promote).then(|| Exploitation {
                trigger_path: "parse_chunk -> copy".into(),
                preconditions: vec!["attacker controls input".into()],
            }),
            refuted_subclaim: None,
            severity_proposal: None,
            annotation: None,
        }
    }

    /// One candidate in Stage A with a creative and an adversarial verdict.
    pub(crate) fn sample_state() -> CampaignState {
        let mut state = CampaignState::new(CampaignMeta::new("test", 1, ViewPolicy::default()));
        state.prepared = Some(PreparedTarget {
            target_ref: TargetRef {
                repository: "demo/lib".into(),
                revision: "v1.0".into(),
                development_head: false,
            },
            prior_art_brief: "CVE-style overflow in chunk parser".into(),
            hotspot_list: vec![],
            subsystem_partition: vec!["parsing".into(), "io".into(), "crypto".into()],
            warnings: vec![],
        });
        let header = CandidateHeader {
            id: "c1".into(),
            target_ref: state.prepared.as_ref().unwrap().target_ref.clone(),
            claim: Claim {
                title: "heap overflow".into(),
                defect_class: DefectClass::MemorySafety,
                claimed_severity: None,
                entry_points: vec!["src/parse.c:120".into()],
                summary: "length trusted".into(),
            },
            origin: Origin {
                hunter_id: "hunter.0".into(),
                wave: 1,
                source_stratum: SourceStratum::PriorDefects,
                scope_stratum: "parsing".into(),
            },
        };
        let c = Candidate::generate(header, 1, "intake").unwrap();
        state.add_candidate(
            c,
            IntakeRecord {
                candidate_id: "c1".into(),
                hunter_id: "hunter.0".into(),
                self_critique: "might be bounded upstream".into(),
            },
        );
        for (role, dir, text) in [
            (Role::Creative, Direction::Promote, "copy overruns heap buffer"),
            (Role::Adversarial, Direction::Kill, "length checked at line 80"),
        ] {
            let id = state.next_id("v");
            state.push_verdict(VerdictRecord {
                verdict_id: id.clone(),
                candidate_id: "c1".into(),
                stage: Some(Stage::A),
                attempt: 0,
                round: 0,
                window: 1,
                slot: role.as_str().into(),
                view_kind: None,
                model_family: "family-1".into(),
                tier: Tier::Workhorse,
                verdict: verdict(role, dir, text),
                compliance_flags: vec![],
                timestamp: 2,
            });
        }
        state
    }
}
