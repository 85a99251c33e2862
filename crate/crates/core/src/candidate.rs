//! Candidate domain types and the lifecycle state machine.
//!
//! The event history is the source of truth: [`Candidate::state`] and
//! [`Candidate::flags`] are a cache that [`Candidate::replay`] can always
//! rebuild. Every mutation goes through [`Candidate::apply`], which validates
//! the implied transition before touching anything.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::Routing;
use crate::overrides::{OverrideAction, OverrideRecord};
use crate::validation::cvss::SeverityVector;
use crate::validation::ValidationStatus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    A,
    B,
    C,
    D,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::A, Stage::B, Stage::C, Stage::D];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn parse(s: &str) -> Option<Stage> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Some(Stage::A),
            "B" => Some(Stage::B),
            "C" => Some(Stage::C),
            "D" => Some(Stage::D),
            _ => None,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::A => "A",
            Stage::B => "B",
            Stage::C => "C",
            Stage::D => "D",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DefectClass {
    MemorySafety,
    Logic,
    CryptoOracle,
    SpecDefect,
    Other,
}

impl DefectClass {
    pub fn as_str(self) -> &'static str {
        match self {
            DefectClass::MemorySafety => "memory-safety",
            DefectClass::Logic => "logic",
            DefectClass::CryptoOracle => "crypto-oracle",
            DefectClass::SpecDefect => "spec-defect",
            DefectClass::Other => "other",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub title: String,
    pub defect_class: DefectClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claimed_severity: Option<SeverityVector>,
    #[serde(default)]
    pub entry_points: Vec<String>,
    pub summary: String,
}

impl Claim {
    pub fn validate(&self) -> Result<(), CandidateError> {
        if self.title.trim().is_empty() {
            return Err(CandidateError::InvalidClaim("title is empty".into()));
        }
        if self.summary.trim().is_empty() {
            return Err(CandidateError::InvalidClaim("summary is empty".into()));
        }
        if self.entry_points.is_empty() && self.defect_class != DefectClass::SpecDefect {
            return Err(CandidateError::InvalidClaim(
                "entry points may be empty only for spec defects".into(),
            ));
        }
        if let Some(sev) = &self.claimed_severity {
            sev.verify()
                .map_err(|e| CandidateError::InvalidClaim(format!("claimed severity: {e}")))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceStratum {
    PriorDefects,
    GitHotspots,
    NormativeSpec,
    BugArchetypes,
}

impl SourceStratum {
    pub const ALL: [SourceStratum; 4] = [
        SourceStratum::PriorDefects,
        SourceStratum::GitHotspots,
        SourceStratum::NormativeSpec,
        SourceStratum::BugArchetypes,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Origin {
    pub hunter_id: String,
    pub wave: u32,
    pub source_stratum: SourceStratum,
    pub scope_stratum: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetRef {
    pub repository: String,
    pub revision: String,
    /// Set when no release tag or branch could be found and the campaign
    /// fell back to the development head.
    #[serde(default)]
    pub development_head: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum LifecycleState {
    Generated,
    InStage { stage: Stage },
    DisclosureReady,
    Killed { stage: Stage, reason_ref: String },
    Reentry { target_stage: Stage },
}

impl LifecycleState {
    pub fn is_terminal(&self) -> bool {
        matches!(self, LifecycleState::DisclosureReady | LifecycleState::Killed { .. })
    }

    /// Stage the candidate is working in. A freshly generated candidate is
    /// waiting on Stage A.
    pub fn active_stage(&self) -> Option<Stage> {
        match self {
            LifecycleState::Generated => Some(Stage::A),
            LifecycleState::InStage { stage } => Some(*stage),
            LifecycleState::Reentry { target_stage } => Some(*target_stage),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            LifecycleState::Generated => "Generated".into(),
            LifecycleState::InStage { stage } => format!("InStage({stage})"),
            LifecycleState::DisclosureReady => "DisclosureReady".into(),
            LifecycleState::Killed { stage, .. } => format!("Killed({stage})"),
            LifecycleState::Reentry { target_stage } => format!("Reentry({target_stage})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    Provisional,
    Resurrected,
    UnanimityWarned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateOutcome {
    Promote,
    Kill,
    PartialKillReentry,
    PromoteProvisional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    Generated,
    Dispatched {
        stage: Stage,
        agent_id: String,
        /// Processing window (generation wave in progress) at dispatch time.
        window: u32,
    },
    VerdictRecorded {
        stage: Stage,
    },
    GateDecided {
        stage: Stage,
        outcome: GateOutcome,
        verdict_refs: Vec<String>,
        #[serde(default)]
        unanimity_warning: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reentry_target: Option<Stage>,
    },
    /// Carries the Stage-C decision: the payload references the decision record.
    Validated {
        status: ValidationStatus,
        #[serde(default)]
        unanimity_warning: bool,
    },
    Overridden {
        action: OverrideAction,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target_stage: Option<Stage>,
        human_channel: bool,
    },
    Reseeded {
        wave: u32,
    },
    RefusalRecorded {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stage: Option<Stage>,
        agent_id: String,
        routing: Routing,
    },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Generated => "generated",
            EventKind::Dispatched { .. } => "dispatched",
            EventKind::VerdictRecorded { .. } => "verdict_recorded",
            EventKind::GateDecided { .. } => "gate_decided",
            EventKind::Validated { .. } => "validated",
            EventKind::Overridden { .. } => "overridden",
            EventKind::Reseeded { .. } => "reseeded",
            EventKind::RefusalRecorded { .. } => "refusal_recorded",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub timestamp: u64,
    #[serde(flatten)]
    pub kind: EventKind,
    pub payload_ref: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CandidateError {
    #[error("illegal transition {from} -> {to}")]
    IllegalTransition { from: String, to: String },
    #[error("stale sequence: expected {expected}, got {got}")]
    StaleSequence { expected: u64, got: u64 },
    #[error("candidate is not killed (state {state})")]
    NotKilled { state: String },
    #[error("override lacks the human-channel authorization marker")]
    MissingAuthorization,
    #[error("invalid claim: {0}")]
    InvalidClaim(String),
    #[error("gate decision references unknown verdict {0}")]
    DanglingVerdictRef(String),
}

impl CandidateError {
    pub fn code(&self) -> &'static str {
        match self {
            CandidateError::IllegalTransition { .. } => "IllegalTransition",
            CandidateError::StaleSequence { .. } => "StaleSequence",
            CandidateError::NotKilled { .. } => "NotKilled",
            CandidateError::MissingAuthorization => "MissingAuthorization",
            CandidateError::InvalidClaim(_) => "InvalidClaim",
            CandidateError::DanglingVerdictRef(_) => "DanglingVerdictRef",
        }
    }
}

/// The immutable part of a candidate, fixed at intake.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateHeader {
    pub id: String,
    pub target_ref: TargetRef,
    pub claim: Claim,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub target_ref: TargetRef,
    pub claim: Claim,
    pub origin: Origin,
    pub state: LifecycleState,
    pub flags: BTreeSet<Flag>,
    pub history: Vec<Event>,
}

impl Candidate {
    /// A new candidate whose history holds the single `generated` event.
    pub fn generate(
        header: CandidateHeader,
        timestamp: u64,
        payload_ref: impl Into<String>,
    ) -> Result<Self, CandidateError> {
        header.claim.validate()?;
        let mut candidate = Self::blank(header);
        candidate.apply(Event {
            seq: 1,
            timestamp,
            kind: EventKind::Generated,
            payload_ref: payload_ref.into(),
        })?;
        Ok(candidate)
    }

    fn blank(header: CandidateHeader) -> Self {
        Self {
            id: header.id,
            target_ref: header.target_ref,
            claim: header.claim,
            origin: header.origin,
            state: LifecycleState::Generated,
            flags: BTreeSet::new(),
            history: Vec::new(),
        }
    }

    pub fn header(&self) -> CandidateHeader {
        CandidateHeader {
            id: self.id.clone(),
            target_ref: self.target_ref.clone(),
            claim: self.claim.clone(),
            origin: self.origin.clone(),
        }
    }

    /// Rebuild a candidate from its header and full event history.
    pub fn replay(header: CandidateHeader, events: &[Event]) -> Result<Self, CandidateError> {
        let mut candidate = Self::blank(header);
        for event in events {
            candidate.apply(event.clone())?;
        }
        Ok(candidate)
    }

    pub fn next_seq(&self) -> u64 {
        self.history.last().map(|e| e.seq + 1).unwrap_or(1)
    }

    pub fn has_flag(&self, flag: Flag) -> bool {
        self.flags.contains(&flag)
    }

    /// Number of resurrection overrides applied so far.
    pub fn attempt(&self) -> u32 {
        self.history
            .iter()
            .filter(|e| {
                matches!(
                    e.kind,
                    EventKind::Overridden {
                        action: OverrideAction::Resurrect,
                        ..
                    }
                )
            })
            .count() as u32
    }

    /// Validate and apply `event`. On error the candidate is left untouched.
    pub fn apply(&mut self, event: Event) -> Result<(), CandidateError> {
        let expected = self.next_seq();
        if event.seq != expected {
            return Err(CandidateError::StaleSequence {
                expected,
                got: event.seq,
            });
        }
        let (state, flags) = self.next_state(&event)?;
        self.state = state;
        self.flags = flags;
        self.history.push(event);
        Ok(())
    }

    fn illegal(&self, to: impl Into<String>) -> CandidateError {
        CandidateError::IllegalTransition {
            from: self.state.label(),
            to: to.into(),
        }
    }

    fn next_state(
        &self,
        event: &Event,
    ) -> Result<(LifecycleState, BTreeSet<Flag>), CandidateError> {
        use LifecycleState as S;
        let mut flags = self.flags.clone();
        let current = self.state.clone();

        if self.history.is_empty() {
            return match event.kind {
                EventKind::Generated => Ok((S::Generated, flags)),
                _ => Err(self.illegal(format!("{} before generated", event.kind.name()))),
            };
        }

        let next = match &event.kind {
            EventKind::Generated => return Err(self.illegal("generated (duplicate)")),
            EventKind::Dispatched { stage, .. } => match (&current, stage) {
                (S::Generated, Stage::A) => S::InStage { stage: Stage::A },
                (S::InStage { stage: s }, t) if s == t => current.clone(),
                (S::Reentry { target_stage }, t) if target_stage == t => S::InStage { stage: *t },
                _ => return Err(self.illegal(format!("dispatch at {stage}"))),
            },
            EventKind::VerdictRecorded { stage } => {
                if current.active_stage() != Some(*stage) || matches!(current, S::Reentry { .. }) {
                    return Err(self.illegal(format!("verdict at {stage}")));
                }
                current.clone()
            }
            EventKind::GateDecided {
                stage,
                outcome,
                verdict_refs,
                unanimity_warning,
                reentry_target,
            } => {
                let in_stage = matches!(current, S::Generated | S::InStage { .. })
                    && current.active_stage() == Some(*stage);
                if !in_stage {
                    return Err(self.illegal(format!("gate {outcome:?} at {stage}")));
                }
                if verdict_refs.is_empty() {
                    return Err(self.illegal(format!("gate at {stage} without verdicts")));
                }
                for r in verdict_refs {
                    let known = self.history.iter().any(|e| {
                        matches!(e.kind, EventKind::VerdictRecorded { .. }) && &e.payload_ref == r
                    });
                    if !known {
                        return Err(CandidateError::DanglingVerdictRef(r.clone()));
                    }
                }
                let next = match (stage, outcome) {
                    (Stage::A, GateOutcome::Promote) => S::InStage { stage: Stage::B },
                    (Stage::B, GateOutcome::Promote) => S::InStage { stage: Stage::C },
                    (Stage::D, GateOutcome::Promote) => S::DisclosureReady,
                    (Stage::A | Stage::B | Stage::D, GateOutcome::Kill) => S::Killed {
                        stage: *stage,
                        reason_ref: event.payload_ref.clone(),
                    },
                    (Stage::D, GateOutcome::PartialKillReentry) => {
                        let target = reentry_target.unwrap_or(Stage::B);
                        if !matches!(target, Stage::A | Stage::B) {
                            return Err(self.illegal(format!("Reentry({target})")));
                        }
                        S::Reentry {
                            target_stage: target,
                        }
                    }
                    _ => return Err(self.illegal(format!("gate {outcome:?} at {stage}"))),
                };
                if *unanimity_warning {
                    flags.insert(Flag::UnanimityWarned);
                }
                next
            }
            EventKind::Validated {
                status,
                unanimity_warning,
            } => {
                if current != (S::InStage { stage: Stage::C }) {
                    return Err(self.illegal(format!("validated({status:?})")));
                }
                if *unanimity_warning {
                    flags.insert(Flag::UnanimityWarned);
                }
                match status {
                    ValidationStatus::Refuted => S::Killed {
                        stage: Stage::C,
                        reason_ref: event.payload_ref.clone(),
                    },
                    ValidationStatus::Confirmed => S::InStage { stage: Stage::D },
                    ValidationStatus::Infeasible => {
                        flags.insert(Flag::Provisional);
                        S::InStage { stage: Stage::D }
                    }
                }
            }
            EventKind::Overridden {
                action,
                target_stage,
                human_channel,
            } => {
                if !human_channel {
                    return Err(CandidateError::MissingAuthorization);
                }
                match action {
                    OverrideAction::Resurrect => {
                        if !matches!(current, S::Killed { .. }) {
                            return Err(CandidateError::NotKilled {
                                state: current.label(),
                            });
                        }
                        let target = target_stage.unwrap_or(Stage::A);
                        if target == Stage::D {
                            return Err(self.illegal("InStage(D) via resurrection"));
                        }
                        flags.insert(Flag::Resurrected);
                        // Stage C runs again, so an earlier provisional pass no longer applies.
                        flags.remove(&Flag::Provisional);
                        S::InStage { stage: target }
                    }
                    OverrideAction::ForceKill => match current.active_stage() {
                        Some(stage) => S::Killed {
                            stage,
                            reason_ref: event.payload_ref.clone(),
                        },
                        None => return Err(self.illegal("Killed via force_kill")),
                    },
                    OverrideAction::ApproveDisclosure => {
                        if current != S::DisclosureReady {
                            return Err(self.illegal("approve_disclosure"));
                        }
                        current.clone()
                    }
                    OverrideAction::SetSeverity => current.clone(),
                }
            }
            EventKind::Reseeded { .. } | EventKind::RefusalRecorded { .. } => current.clone(),
        };
        Ok((next, flags))
    }
}

/// Pure form of [`Candidate::apply`]: returns the successor candidate.
pub fn transition(candidate: &Candidate, event: Event) -> Result<Candidate, CandidateError> {
    let mut next = candidate.clone();
    next.apply(event)?;
    Ok(next)
}

/// Return a killed candidate to an active stage on a human override.
pub fn resurrect(candidate: &Candidate, record: &OverrideRecord) -> Result<Candidate, CandidateError> {
    if !record.human_channel {
        return Err(CandidateError::MissingAuthorization);
    }
    if !matches!(candidate.state, LifecycleState::Killed { .. }) {
        return Err(CandidateError::NotKilled {
            state: candidate.state.label(),
        });
    }
    transition(
        candidate,
        Event {
            seq: candidate.next_seq(),
            timestamp: record.timestamp,
            kind: EventKind::Overridden {
                action: OverrideAction::Resurrect,
                target_stage: Some(record.target_stage.unwrap_or(Stage::A)),
                human_channel: true,
            },
            payload_ref: record.override_id.clone(),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> CandidateHeader {
        CandidateHeader {
            id: "c1".into(),
            target_ref: TargetRef {
                repository: "demo/lib".into(),
                revision: "v1.2.0".into(),
                development_head: false,
            },
            claim: Claim {
                title: "heap overflow in parser".into(),
                defect_class: DefectClass::MemorySafety,
                claimed_severity: None,
                entry_points: vec!["src/parse.c:120".into()],
                summary: "length field trusted".into(),
            },
            origin: Origin {
                hunter_id: "h1".into(),
                wave: 1,
                source_stratum: SourceStratum::PriorDefects,
                scope_stratum: "parsing".into(),
            },
        }
    }

    fn ev(c: &Candidate, kind: EventKind, payload: &str) -> Event {
        Event {
            seq: c.next_seq(),
            timestamp: c.next_seq(),
            kind,
            payload_ref: payload.into(),
        }
    }

    fn with_verdict(c: &Candidate, stage: Stage, id: &str) -> Candidate {
        transition(c, ev(c, EventKind::VerdictRecorded { stage }, id)).unwrap()
    }

    fn gate(stage: Stage, outcome: GateOutcome, refs: &[&str]) -> EventKind {
        EventKind::GateDecided {
            stage,
            outcome,
            verdict_refs: refs.iter().map(|s| s.to_string()).collect(),
            unanimity_warning: false,
            reentry_target: None,
        }
    }

    fn human(action: OverrideAction, target: Option<Stage>) -> OverrideRecord {
        OverrideRecord {
            override_id: "o1".into(),
            operator_id: "op".into(),
            action,
            candidate_id: "c1".into(),
            justification: "trigger shrunk to 4.8 KB".into(),
            timestamp: 99,
            human_channel: true,
            target_stage: target,
            severity_vector: None,
        }
    }

    fn killed_at_c() -> Candidate {
        let mut c = Candidate::generate(header(), 1, "gen").unwrap();
        c = with_verdict(&c, Stage::A, "v1");
        c = transition(&c, ev(&c, gate(Stage::A, GateOutcome::Promote, &["v1"]), "d1")).unwrap();
        c = with_verdict(&c, Stage::B, "v2");
        c = transition(&c, ev(&c, gate(Stage::B, GateOutcome::Promote, &["v2"]), "d2")).unwrap();
        transition(
            &c,
            ev(
                &c,
                EventKind::Validated {
                    status: ValidationStatus::Refuted,
                    unanimity_warning: false,
                },
                "d3",
            ),
        )
        .unwrap()
    }

    #[test]
    fn stage_a_promote_from_generated() {
        let c = Candidate::generate(header(), 1, "gen").unwrap();
        let c = with_verdict(&c, Stage::A, "v1");
        let c = transition(&c, ev(&c, gate(Stage::A, GateOutcome::Promote, &["v1"]), "d1")).unwrap();
        assert_eq!(c.state, LifecycleState::InStage { stage: Stage::B });
    }

    #[test]
    fn infeasible_validation_sets_provisional() {
        let mut c = Candidate::generate(header(), 1, "gen").unwrap();
        c = with_verdict(&c, Stage::A, "v1");
        c = transition(&c, ev(&c, gate(Stage::A, GateOutcome::Promote, &["v1"]), "d1")).unwrap();
        c = with_verdict(&c, Stage::B, "v2");
        c = transition(&c, ev(&c, gate(Stage::B, GateOutcome::Promote, &["v2"]), "d2")).unwrap();
        let kind = EventKind::Validated {
            status: ValidationStatus::Infeasible,
            unanimity_warning: false,
        };
        c = transition(&c, ev(&c, kind, "d3")).unwrap();
        assert_eq!(c.state, LifecycleState::InStage { stage: Stage::D });
        assert!(c.has_flag(Flag::Provisional));
    }

    #[test]
    fn killed_is_terminal() {
        let c = killed_at_c();
        let err = transition(&c, ev(&c, gate(Stage::C, GateOutcome::Promote, &["v2"]), "x"))
            .unwrap_err();
        assert!(matches!(err, CandidateError::IllegalTransition { .. }));
        let err = transition(
            &c,
            ev(&c, EventKind::Dispatched { stage: Stage::A, agent_id: "a".into(), window: 1 }, "x"),
        )
        .unwrap_err();
        assert_eq!(err.code(), "IllegalTransition");
    }

    #[test]
    fn stale_sequence_rejected() {
        let c = Candidate::generate(header(), 1, "gen").unwrap();
        let mut e = ev(&c, EventKind::VerdictRecorded { stage: Stage::A }, "v1");
        e.seq = 5;
        assert_eq!(
            transition(&c, e).unwrap_err(),
            CandidateError::StaleSequence { expected: 2, got: 5 }
        );
    }

    #[test]
    fn gate_requires_recorded_verdicts() {
        let c = Candidate::generate(header(), 1, "gen").unwrap();
        let err = transition(&c, ev(&c, gate(Stage::A, GateOutcome::Kill, &["ghost"]), "d")).unwrap_err();
        assert_eq!(err, CandidateError::DanglingVerdictRef("ghost".into()));
    }

    #[test]
    fn resurrect_killed_defaults_to_stage_a() {
        let c = killed_at_c();
        let r = resurrect(&c, &human(OverrideAction::Resurrect, None)).unwrap();
        assert_eq!(r.state, LifecycleState::InStage { stage: Stage::A });
        assert!(r.has_flag(Flag::Resurrected));
        assert_eq!(r.attempt(), 1);
        // kill history is preserved
        assert!(r.history.iter().any(|e| matches!(
            e.kind,
            EventKind::Validated { status: ValidationStatus::Refuted, .. }
        )));
    }

    #[test]
    fn resurrect_requires_kill_and_authorization() {
        let c = Candidate::generate(header(), 1, "gen").unwrap();
        assert!(matches!(
            resurrect(&c, &human(OverrideAction::Resurrect, None)),
            Err(CandidateError::NotKilled { .. })
        ));
        let mut unauth = human(OverrideAction::Resurrect, None);
        unauth.human_channel = false;
        assert_eq!(
            resurrect(&killed_at_c(), &unauth).unwrap_err(),
            CandidateError::MissingAuthorization
        );
    }

    #[test]
    fn reentry_then_dispatch() {
        let mut c = Candidate::generate(header(), 1, "gen").unwrap();
        for (stage, d) in [(Stage::A, "d1"), (Stage::B, "d2")] {
            c = with_verdict(&c, stage, &format!("v{d}"));
            c = transition(&c, ev(&c, gate(stage, GateOutcome::Promote, &[&format!("v{d}")]), d)).unwrap();
        }
        let kind = EventKind::Validated { status: ValidationStatus::Confirmed, unanimity_warning: false };
        c = transition(&c, ev(&c, kind, "d3")).unwrap();
        c = with_verdict(&c, Stage::D, "v4");
        let kind = EventKind::GateDecided {
            stage: Stage::D,
            outcome: GateOutcome::PartialKillReentry,
            verdict_refs: vec!["v4".into()],
            unanimity_warning: false,
            reentry_target: Some(Stage::B),
        };
        c = transition(&c, ev(&c, kind, "d4")).unwrap();
        assert_eq!(c.state, LifecycleState::Reentry { target_stage: Stage::B });
        let d = EventKind::Dispatched { stage: Stage::B, agent_id: "x".into(), window: 1 };
        c = transition(&c, ev(&c, d, "x")).unwrap();
        assert_eq!(c.state, LifecycleState::InStage { stage: Stage::B });
    }

    #[test]
    fn replay_reproduces_state() {
        let c = resurrect(&killed_at_c(), &human(OverrideAction::Resurrect, Some(Stage::B))).unwrap();
        let replayed = Candidate::replay(c.header(), &c.history).unwrap();
        assert_eq!(replayed, c);
    }
}
