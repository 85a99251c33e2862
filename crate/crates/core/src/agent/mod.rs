//! Uniform dispatch over agent backends.
//!
//! The gateway never retries a refusal on its own. It hands the refusal back
//! and [`handle_refusal`] decides whether a senior agent or a human sees it next.

pub mod live;
pub mod task;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::candidate::{Claim, SourceStratum, Stage};
use crate::context::ContextView;
use crate::engine::learnings::Learnings;
use crate::rules::Assertion;
use crate::validation::cvss::SeverityVector;
use crate::validation::CheckSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Hunter,
    Research,
    Creative,
    Adversarial,
    Validator,
    Critic,
    Arbiter,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Hunter => "hunter",
            Role::Research => "research",
            Role::Creative => "creative",
            Role::Adversarial => "adversarial",
            Role::Validator => "validator",
            Role::Critic => "critic",
            Role::Arbiter => "arbiter",
        }
    }

    /// Roles whose mandate is to refute.
    pub fn is_adversarial(self) -> bool {
        matches!(self, Role::Adversarial | Role::Critic | Role::Arbiter)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Workhorse,
    Senior,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Scripted,
    Live,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub agent_id: String,
    pub backend: BackendKind,
    pub model_family: String,
    pub tier: Tier,
    pub role: Role,
}

impl AgentSpec {
    /// The same family's senior tier, taking over the same slot.
    pub fn senior(&self) -> AgentSpec {
        AgentSpec {
            agent_id: format!("{}@senior", self.agent_id.trim_end_matches("@senior")),
            tier: Tier::Senior,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Hunt,
    Research,
    Review,
    Validate,
    /// Stage-C severity assessment.
    Assess,
    Critique,
    /// Confirm-mandate second look after a unanimous kill.
    Confirm,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Hunt => "hunt",
            TaskKind::Research => "research",
            TaskKind::Review => "review",
            TaskKind::Validate => "validate",
            TaskKind::Assess => "assess",
            TaskKind::Critique => "critique",
            TaskKind::Confirm => "confirm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            TaskKind::Hunt,
            TaskKind::Research,
            TaskKind::Review,
            TaskKind::Validate,
            TaskKind::Assess,
            TaskKind::Critique,
            TaskKind::Confirm,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
    }

    pub fn expects_verdict(self) -> bool {
        matches!(
            self,
            TaskKind::Review | TaskKind::Assess | TaskKind::Critique | TaskKind::Confirm
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HuntBrief {
    pub wave: u32,
    pub scopes: Vec<String>,
    pub source_stratum: SourceStratum,
    pub prior_art_brief: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learnings: Option<Learnings>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<Stage>,
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate_id: Option<String>,
    /// Roster position. Reassigned dispatches keep the slot of the agent they replace.
    pub slot: String,
    /// Number of partial-kill re-entries so far.
    pub round: u32,
    /// Number of resurrections so far.
    pub attempt: u32,
    #[serde(default)]
    pub remote: bool,
    pub text: String,
    #[serde(default)]
    pub assertions: Vec<Assertion>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hunt: Option<HuntBrief>,
    /// Research scope for prepare-time dispatches.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scope: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Promote,
    Kill,
    PartialKill,
    Abstain,
    Refused,
}

impl Direction {
    pub fn counts_toward_unanimity(self) -> bool {
        matches!(self, Direction::Promote | Direction::Kill | Direction::PartialKill)
    }
}

/// Structured form of a plausible exploitation argument.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exploitation {
    pub trigger_path: String,
    pub preconditions: Vec<String>,
}

impl Exploitation {
    pub fn is_structured(&self) -> bool {
        !self.trigger_path.trim().is_empty() && !self.preconditions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub agent_id: String,
    pub role: Role,
    pub direction: Direction,
    pub rationale: String,
    #[serde(default)]
    pub evidence_refs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code_grounded: Option<bool>,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exploitation: Option<Exploitation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refuted_subclaim: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub severity_proposal: Option<SeverityVector>,
    /// Set by the gateway on timeouts and backend failures.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<String>,
}

impl Verdict {
    pub fn abstain(agent: &AgentSpec, annotation: impl Into<String>) -> Self {
        Verdict {
            agent_id: agent.agent_id.clone(),
            role: agent.role,
            direction: Direction::Abstain,
            rationale: String::new(),
            evidence_refs: vec![],
            code_grounded: None,
            confidence: 0.0,
            exploitation: None,
            refuted_subclaim: None,
            severity_proposal: None,
            annotation: Some(annotation.into()),
        }
    }

    pub fn is_code_grounded_kill(&self) -> bool {
        self.direction == Direction::Kill && self.code_grounded == Some(true)
    }

    pub fn has_plausible_exploitation(&self) -> bool {
        self.direction == Direction::Promote
            && self.exploitation.as_ref().is_some_and(Exploitation::is_structured)
    }

    pub fn check(&self) -> Result<(), GatewayError> {
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(GatewayError::MalformedResponse(format!(
                "confidence {} out of range",
                self.confidence
            )));
        }
        if self.direction == Direction::Kill
            && self.role == Role::Adversarial
            && self.code_grounded.is_none()
        {
            return Err(GatewayError::MalformedResponse(
                "adversarial kill must state code_grounded".into(),
            ));
        }
        if self.direction == Direction::PartialKill
            && self.refuted_subclaim.as_deref().is_none_or(|s| s.trim().is_empty())
        {
            return Err(GatewayError::MalformedResponse(
                "partial kill must name the refuted subclaim".into(),
            ));
        }
        if let Some(sev) = &self.severity_proposal {
            sev.verify()
                .map_err(|e| GatewayError::MalformedResponse(e.to_string()))?;
        }
        Ok(())
    }
}

/// One hunter-proposed candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposed_id: Option<String>,
    pub claim: Claim,
    pub source_stratum: SourceStratum,
    pub scope_stratum: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub self_critique: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub check: CheckSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResponseBody {
    Verdict(Verdict),
    CandidateBatch { candidates: Vec<Proposal> },
    ValidationReport(ValidationReport),
    ResearchBrief { text: String },
    Refusal { refusal_reason: String },
}

impl ResponseBody {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ResponseBody::Verdict(_) => "verdict",
            ResponseBody::CandidateBatch { .. } => "candidate_batch",
            ResponseBody::ValidationReport(_) => "validation_report",
            ResponseBody::ResearchBrief { .. } => "research_brief",
            ResponseBody::Refusal { .. } => "refusal",
        }
    }

    fn matches(&self, task: TaskKind) -> bool {
        matches!(
            (self, task),
            (ResponseBody::Refusal { .. }, _)
                | (ResponseBody::CandidateBatch { .. }, TaskKind::Hunt)
                | (ResponseBody::ResearchBrief { .. }, TaskKind::Research)
                | (ResponseBody::ValidationReport(_), TaskKind::Validate)
        ) || (matches!(self, ResponseBody::Verdict(_)) && task.expects_verdict())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentResponse {
    pub agent_id: String,
    pub body: ResponseBody,
    pub raw_transcript_ref: String,
}

/// What a backend hands back: the parsed body and the raw transcript text.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendReply {
    pub body: ResponseBody,
    pub transcript: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GatewayError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("dispatch timed out after {0:?}")]
    Timeout(Duration),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
}

pub trait AgentBackend: Send + Sync {
    fn invoke(
        &self,
        agent: &AgentSpec,
        task: &TaskSpec,
        view: Option<&ContextView>,
    ) -> Result<BackendReply, GatewayError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Routing {
    ReassignSenior,
    EscalateHuman,
}

/// Workhorse refusals go to the same family's senior tier; senior refusals go
/// to a human. A refusal is never a kill or promote signal.
pub fn handle_refusal(response: &AgentResponse, spec: &AgentSpec) -> Option<Routing> {
    match response.body {
        ResponseBody::Refusal { .. } => Some(match spec.tier {
            Tier::Workhorse => Routing::ReassignSenior,
            Tier::Senior => Routing::EscalateHuman,
        }),
        _ => None,
    }
}

#[derive(Clone)]
pub struct Gateway {
    scripted: Option<Arc<dyn AgentBackend>>,
    live: Option<Arc<dyn AgentBackend>>,
    pub timeout: Duration,
}

impl Gateway {
    pub fn new(
        scripted: Option<Arc<dyn AgentBackend>>,
        live: Option<Arc<dyn AgentBackend>>,
        timeout: Duration,
    ) -> Self {
        Self {
            scripted,
            live,
            timeout,
        }
    }

    pub fn scripted(backend: Arc<dyn AgentBackend>) -> Self {
        Self::new(Some(backend), None, Duration::from_secs(600))
    }

    /// Dispatch one task. Backend failures on verdict tasks become an annotated
    /// abstain; on other tasks they are returned as errors for the caller to
    /// degrade as it sees fit.
    pub fn dispatch(
        &self,
        agent: &AgentSpec,
        task: &TaskSpec,
        view: Option<&ContextView>,
        transcript_ref: String,
    ) -> Result<(AgentResponse, String), GatewayError> {
        let backend = match agent.backend {
            BackendKind::Scripted => self.scripted.as_ref(),
            BackendKind::Live => self.live.as_ref(),
        };
        let outcome = match backend {
            Some(b) => b.invoke(agent, task, view).and_then(|reply| {
                if !reply.body.matches(task.kind) {
                    return Err(GatewayError::MalformedResponse(format!(
                        "{} reply to a {} task",
                        reply.body.kind_name(),
                        task.kind.as_str()
                    )));
                }
                if let ResponseBody::Verdict(v) = &reply.body {
                    v.check()?;
                }
                Ok(reply)
            }),
            None => Err(GatewayError::BackendUnavailable(format!(
                "no {:?} backend configured",
                agent.backend
            ))),
        };
        match outcome {
            Ok(reply) => Ok((
                AgentResponse {
                    agent_id: agent.agent_id.clone(),
                    body: reply.body,
                    raw_transcript_ref: transcript_ref,
                },
                reply.transcript,
            )),
            Err(e) if task.kind.expects_verdict() => {
                let annotation = e.to_string();
                Ok((
                    AgentResponse {
                        agent_id: agent.agent_id.clone(),
                        body: ResponseBody::Verdict(Verdict::abstain(agent, annotation.clone())),
                        raw_transcript_ref: transcript_ref,
                    },
                    format!("error: {annotation}\n"),
                ))
            }
            Err(e) => Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(Result<BackendReply, GatewayError>);

    impl AgentBackend for Fixed {
        fn invoke(&self, _: &AgentSpec, _: &TaskSpec, _: Option<&ContextView>) -> Result<BackendReply, GatewayError> {
            self.0.clone()
        }
    }

    fn spec(tier: Tier) -> AgentSpec {
        AgentSpec {
            agent_id: "B.adv.claim".into(),
            backend: BackendKind::Scripted,
            model_family: "family-1".into(),
            tier,
            role: Role::Adversarial,
        }
    }

    fn task(kind: TaskKind) -> TaskSpec {
        TaskSpec {
            kind,
            stage: Some(Stage::B),
            role: Role::Adversarial,
            candidate_id: Some("c1".into()),
            slot: "B.adv.claim".into(),
            round: 0,
            attempt: 0,
            remote: false,
            text: String::new(),
            assertions: vec![],
            hunt: None,
            scope: None,
        }
    }

    #[test]
    fn timeout_becomes_abstain() {
        let gw = Gateway::scripted(Arc::new(Fixed(Err(GatewayError::Timeout(Duration::from_secs(600))))));
        let (resp, _) = gw.dispatch(&spec(Tier::Workhorse), &task(TaskKind::Review), None, "t".into()).unwrap();
        match resp.body {
            ResponseBody::Verdict(v) => {
                assert_eq!(v.direction, Direction::Abstain);
                assert!(v.annotation.unwrap().contains("timed out"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn hunt_failure_is_an_error() {
        let gw = Gateway::scripted(Arc::new(Fixed(Err(GatewayError::BackendUnavailable("down".into())))));
        assert!(gw.dispatch(&spec(Tier::Workhorse), &task(TaskKind::Hunt), None, "t".into()).is_err());
    }

    #[test]
    fn refusal_routing_by_tier() {
        let resp = AgentResponse {
            agent_id: "a".into(),
            body: ResponseBody::Refusal {
                refusal_reason: "policy".into(),
            },
            raw_transcript_ref: "t".into(),
        };
        assert_eq!(handle_refusal(&resp, &spec(Tier::Workhorse)), Some(Routing::ReassignSenior));
        assert_eq!(handle_refusal(&resp, &spec(Tier::Senior)), Some(Routing::EscalateHuman));
        assert_eq!(spec(Tier::Workhorse).senior().agent_id, "B.adv.claim@senior");
    }

    #[test]
    fn kill_without_grounding_statement_is_malformed() {
        let mut v = Verdict::abstain(&spec(Tier::Workhorse), "");
        v.direction = Direction::Kill;
        assert!(v.check().is_err());
        v.code_grounded = Some(false);
        assert!(v.check().is_ok());
        v.direction = Direction::PartialKill;
        assert!(v.check().is_err());
    }
}
