//! Codified lessons with incident provenance.
//!
//! Each rule embeds the event it was distilled from, so a rule exported to
//! another campaign still carries verifiable evidence.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::task::TaskAssembly;
use crate::agent::{Direction, ResponseBody};
use crate::candidate::Event;
use crate::state::CampaignState;
use crate::util::canonical_digest;
use crate::validation::ObservableSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Advisory,
    ComplianceCheck,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncidentRef {
    pub campaign_id: String,
    pub candidate_id: String,
    pub event_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub event: Event,
    pub event_digest: String,
}

/// Machine-checkable predicate over one agent output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum Predicate {
    /// Rationale, evidence or check text mentions the needle.
    TranscriptMentions { needle: String },
    /// A kill cites at least one evidence reference.
    KillRequiresEvidence,
    /// A validation check reads its observable from the target.
    ObservableFromTarget,
    /// Rationale does not contain the phrase.
    RationaleExcludes { phrase: String },
}

impl Predicate {
    /// None when the predicate does not apply to this kind of output.
    pub fn holds(&self, body: &ResponseBody) -> Option<bool> {
        match (self, body) {
            (Predicate::KillRequiresEvidence, ResponseBody::Verdict(v)) => {
                Some(v.direction != Direction::Kill || !v.evidence_refs.is_empty())
            }
            (Predicate::RationaleExcludes { phrase }, ResponseBody::Verdict(v)) => {
                Some(!v.rationale.to_lowercase().contains(&phrase.to_lowercase()))
            }
            (Predicate::TranscriptMentions { needle }, ResponseBody::Verdict(v)) => Some(
                v.rationale.contains(needle.as_str())
                    || v.evidence_refs.iter().any(|e| e.contains(needle.as_str())),
            ),
            (Predicate::TranscriptMentions { needle }, ResponseBody::ValidationReport(r)) => Some(
                r.check.expected_observable.contains(needle.as_str())
                    || r.check.probes.iter().flatten().any(|a| a.contains(needle.as_str())),
            ),
            (Predicate::ObservableFromTarget, ResponseBody::ValidationReport(r)) => {
                Some(r.check.observable_source == ObservableSource::Target)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assertion {
    pub rule_id: String,
    pub predicate: Predicate,
}

/// Rule ids whose assertion fails on this output.
pub fn evaluate(assertions: &[Assertion], body: &ResponseBody) -> Vec<String> {
    assertions
        .iter()
        .filter(|a| a.predicate.holds(body) == Some(false))
        .map(|a| a.rule_id.clone())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub rule_id: String,
    pub text: String,
    pub kind: RuleKind,
    pub origin_incident: IncidentRef,
    pub evidence: Evidence,
    pub domain_tags: Vec<String>,
    pub created_at: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicate: Option<Predicate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supersedes: Option<String>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RuleError {
    #[error("incident {0} does not resolve to a stored event")]
    DanglingIncident(String),
    #[error("rule text is empty")]
    EmptyText,
    #[error("compliance rules need a predicate")]
    MissingPredicate,
    #[error("unknown rule {0}")]
    UnknownRule(String),
    #[error("malformed rules file line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

impl RuleError {
    pub fn code(&self) -> &'static str {
        match self {
            RuleError::DanglingIncident(_) => "DanglingIncident",
            RuleError::EmptyText => "EmptyText",
            RuleError::MissingPredicate => "MissingPredicate",
            RuleError::UnknownRule(_) => "UnknownRule",
            RuleError::Malformed { .. } => "Malformed",
        }
    }
}

fn incident_label(i: &IncidentRef) -> String {
    format!("{}/{}#{}", i.campaign_id, i.candidate_id, i.event_seq)
}

fn lookup_event<'a>(state: &'a CampaignState, incident: &IncidentRef) -> Option<&'a Event> {
    if incident.campaign_id != state.campaign_id() {
        return None;
    }
    state
        .candidates
        .get(&incident.candidate_id)?
        .history
        .iter()
        .find(|e| e.seq == incident.event_seq)
}

pub struct NewRule {
    pub incident: IncidentRef,
    pub text: String,
    pub kind: RuleKind,
    pub tags: Vec<String>,
    pub predicate: Option<Predicate>,
    pub supersedes: Option<String>,
}

/// Store a rule distilled from an incident in this campaign.
pub fn add_rule(state: &mut CampaignState, new: NewRule, created_at: u64) -> Result<Rule, RuleError> {
    if new.text.trim().is_empty() {
        return Err(RuleError::EmptyText);
    }
    if new.kind == RuleKind::ComplianceCheck && new.predicate.is_none() {
        return Err(RuleError::MissingPredicate);
    }
    if let Some(prev) = &new.supersedes {
        if !state.rules.iter().any(|r| &r.rule_id == prev) {
            return Err(RuleError::UnknownRule(prev.clone()));
        }
    }
    let event = lookup_event(state, &new.incident)
        .ok_or_else(|| RuleError::DanglingIncident(incident_label(&new.incident)))?
        .clone();
    let next = state
        .rules
        .iter()
        .filter_map(|r| r.rule_id.strip_prefix('R').and_then(|n| n.parse::<u32>().ok()))
        .max()
        .unwrap_or(0)
        + 1;
    let rule = Rule {
        rule_id: format!("R{next:03}"),
        text: new.text,
        kind: new.kind,
        origin_incident: new.incident,
        evidence: Evidence {
            event_digest: canonical_digest(&event),
            event,
        },
        domain_tags: new.tags,
        created_at,
        predicate: new.predicate,
        supersedes: new.supersedes,
    };
    state.rules.push(rule.clone());
    Ok(rule)
}

/// Whether a rule's origin incident still resolves. Incidents from this
/// campaign must match the live event; incidents from other campaigns are
/// checked against the embedded evidence digest.
pub fn resolves(rule: &Rule, state: &CampaignState) -> bool {
    let embedded_ok = canonical_digest(&rule.evidence.event) == rule.evidence.event_digest
        && rule.evidence.event.seq == rule.origin_incident.event_seq;
    if rule.origin_incident.campaign_id == state.campaign_id() {
        embedded_ok
            && lookup_event(state, &rule.origin_incident)
                .is_some_and(|e| canonical_digest(e) == rule.evidence.event_digest)
    } else {
        embedded_ok
    }
}

/// Rule ids whose provenance does not resolve.
pub fn provenance_closure(state: &CampaignState) -> Vec<String> {
    state
        .rules
        .iter()
        .filter(|r| !resolves(r, state))
        .map(|r| r.rule_id.clone())
        .collect()
}

/// Rules sharing at least one tag with the target, ordered by rule id.
pub fn select_transfer(rules: &[Rule], target_tags: &[String]) -> Vec<Rule> {
    let mut out: Vec<Rule> = rules
        .iter()
        .filter(|r| r.domain_tags.iter().any(|t| target_tags.contains(t)))
        .cloned()
        .collect();
    out.sort_by(|a, b| a.rule_id.cmp(&b.rule_id));
    out
}

/// Add the rules section and register compliance assertions.
pub fn inject(rules: &[Rule], mut assembly: TaskAssembly) -> TaskAssembly {
    if rules.is_empty() {
        return assembly;
    }
    let mut sorted: Vec<&Rule> = rules.iter().collect();
    sorted.sort_by(|a, b| a.rule_id.cmp(&b.rule_id));
    let mut section = String::from("Rules:\n");
    for r in sorted {
        match r.kind {
            RuleKind::Advisory => section.push_str(&format!("- [{}] {}\n", r.rule_id, r.text)),
            RuleKind::ComplianceCheck => {
                section.push_str(&format!("- [{}] (checked) {}\n", r.rule_id, r.text));
                if let Some(p) = &r.predicate {
                    assembly.assertions.push(Assertion {
                        rule_id: r.rule_id.clone(),
                        predicate: p.clone(),
                    });
                }
            }
        }
    }
    assembly.rules_section = section;
    assembly
}

pub fn export_rules(rules: &[Rule]) -> String {
    rules
        .iter()
        .map(|r| serde_json::to_string(r).expect("rules serialize") + "\n")
        .collect()
}

pub fn import_rules(text: &str) -> Result<Vec<Rule>, RuleError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| RuleError::Malformed {
                line: n + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::Role;
    use crate::state::tests::{sample_state, verdict};

    fn new_rule(seq: u64, kind: RuleKind, predicate: Option<Predicate>) -> NewRule {
        NewRule {
            incident: IncidentRef {
                campaign_id: "test".into(),
                candidate_id: "c1".into(),
                event_seq: seq,
            },
            text: "mandatory empirical validation".into(),
            kind,
            tags: vec!["crypto".into()],
            predicate,
            supersedes: None,
        }
    }

    #[test]
    fn add_and_resolve() {
        let mut state = sample_state();
        let rule = add_rule(&mut state, new_rule(1, RuleKind::Advisory, None), 5).unwrap();
        assert_eq!(rule.rule_id, "R001");
        assert!(provenance_closure(&state).is_empty());
    }

    #[test]
    fn dangling_incident() {
        let mut state = sample_state();
        assert!(matches!(
            add_rule(&mut state, new_rule(99, RuleKind::Advisory, None), 5),
            Err(RuleError::DanglingIncident(_))
        ));
    }

    #[test]
    fn compliance_rule_registers_assertion() {
        let mut state = sample_state();
        add_rule(&mut state, new_rule(1, RuleKind::Advisory, None), 5).unwrap();
        add_rule(
            &mut state,
            new_rule(1, RuleKind::ComplianceCheck, Some(Predicate::KillRequiresEvidence)),
            6,
        )
        .unwrap();
        let a = inject(&state.rules, TaskAssembly::default());
        assert_eq!(a.assertions.len(), 1);
        let r1 = a.rules_section.find("[R001]").unwrap();
        let r2 = a.rules_section.find("[R002]").unwrap();
        assert!(r1 < r2);

        let mut v = verdict(Role::Adversarial, Direction::Kill, "bounded");
        v.evidence_refs.clear();
        assert_eq!(evaluate(&a.assertions, &ResponseBody::Verdict(v)), vec!["R002".to_string()]);
    }

    #[test]
    fn injection_is_deterministic() {
        let mut state = sample_state();
        add_rule(&mut state, new_rule(1, RuleKind::Advisory, None), 5).unwrap();
        let mut reversed = state.rules.clone();
        reversed.reverse();
        assert_eq!(
            inject(&state.rules, TaskAssembly::default()),
            inject(&reversed, TaskAssembly::default())
        );
    }

    #[test]
    fn transfer_selection() {
        let mut state = sample_state();
        add_rule(&mut state, new_rule(1, RuleKind::Advisory, None), 5).unwrap();
        assert_eq!(select_transfer(&state.rules, &["crypto".into()]).len(), 1);
        assert!(select_transfer(&state.rules, &["kernel".into()]).is_empty());
    }

    #[test]
    fn round_trip_and_tamper() {
        let mut state = sample_state();
        add_rule(&mut state, new_rule(1, RuleKind::Advisory, None), 5).unwrap();
        let text = export_rules(&state.rules);
        let mut back = import_rules(&text).unwrap();
        assert_eq!(back, state.rules);
        back[0].evidence.event.timestamp += 1;
        state.rules = back;
        assert_eq!(provenance_closure(&state), vec!["R001".to_string()]);
    }
}
