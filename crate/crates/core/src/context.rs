//! Isolation-controlled context views and the exposure ledger.
//!
//! Each view kind has a content rule. [`audit_isolation`] re-checks every
//! recorded exposure against the stored view content, so a leak introduced
//! anywhere upstream shows up as a violation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{Direction, Role};
use crate::candidate::{Candidate, Claim, DefectClass, Stage, TargetRef};
use crate::state::{CampaignState, VerdictRecord};
use crate::util::canonical_digest;
use crate::validation::cvss::SeverityVector;
use crate::validation::ValidationStatus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ViewKind {
    FullSynthesis,
    ClaimOnly,
    SelectiveSummary,
    ColdStart,
    MinimalSummary,
}

impl ViewKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ViewKind::FullSynthesis => "FullSynthesis",
            ViewKind::ClaimOnly => "ClaimOnly",
            ViewKind::SelectiveSummary => "SelectiveSummary",
            ViewKind::ColdStart => "ColdStart",
            ViewKind::MinimalSummary => "MinimalSummary",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hotspot {
    pub region: String,
    pub churn: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Fragment {
    ClaimTitle {
        text: String,
    },
    ClaimDefectClass {
        class: DefectClass,
    },
    ClaimSeverity {
        severity: SeverityVector,
    },
    ClaimEntryPoints {
        entry_points: Vec<String>,
    },
    ClaimSummary {
        text: String,
    },
    TargetRef {
        target: TargetRef,
    },
    SelfCritique {
        text: String,
    },
    CreativeRationale {
        verdict_id: String,
        text: String,
    },
    PriorVerdict {
        verdict_id: String,
        stage: String,
        role: Role,
        direction: Direction,
        rationale: String,
        /// Recorded before the candidate's most recent resurrection.
        pre_kill: bool,
    },
    ValidationStatus {
        status: ValidationStatus,
    },
    PriorArtBrief {
        text: String,
    },
    HotspotList {
        hotspots: Vec<Hotspot>,
    },
}

impl Fragment {
    pub fn is_pre_kill(&self) -> bool {
        matches!(self, Fragment::PriorVerdict { pre_kill: true, .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextView {
    pub kind: ViewKind,
    pub candidate_id: String,
    pub content: Vec<Fragment>,
    pub content_digest: String,
}

impl ContextView {
    pub fn new(kind: ViewKind, candidate_id: &str, content: Vec<Fragment>) -> Self {
        let content_digest = canonical_digest(&content);
        Self {
            kind,
            candidate_id: candidate_id.to_string(),
            content,
            content_digest,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExposureRecord {
    pub seq: u64,
    pub agent_id: String,
    pub candidate_id: String,
    pub view_kind: ViewKind,
    pub content_digest: String,
    pub timestamp: u64,
    /// None for dispatches outside a gate, such as the resurrection agent.
    pub stage: Option<Stage>,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedTarget {
    pub target_ref: TargetRef,
    pub prior_art_brief: String,
    pub hotspot_list: Vec<Hotspot>,
    pub subsystem_partition: Vec<String>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectiveItem {
    Claim,
    TargetRef,
    ValidationStatus,
    AdversarialRationales,
    PriorArt,
    Hotspots,
}

/// Composition of SelectiveSummary views. Creative rationale is never
/// eligible, whatever the policy says.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewPolicy {
    #[serde(default = "default_selective")]
    pub selective_allowlist: Vec<SelectiveItem>,
    #[serde(default = "default_top")]
    pub top_adversarial: usize,
    /// Whether verdicts from before a resurrection stay visible in FullSynthesis views.
    #[serde(default = "yes")]
    pub pre_kill_in_full_synthesis: bool,
}

fn default_selective() -> Vec<SelectiveItem> {
    vec![
        SelectiveItem::Claim,
        SelectiveItem::ValidationStatus,
        SelectiveItem::AdversarialRationales,
    ]
}

fn default_top() -> usize {
    2
}

fn yes() -> bool {
    true
}

impl Default for ViewPolicy {
    fn default() -> Self {
        Self {
            selective_allowlist: default_selective(),
            top_adversarial: default_top(),
            pre_kill_in_full_synthesis: true,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ContextError {
    #[error("unknown candidate {0}")]
    UnknownCandidate(String),
}

pub fn claim_fragments(claim: &Claim) -> Vec<Fragment> {
    let mut out = vec![
        Fragment::ClaimTitle {
            text: claim.title.clone(),
        },
        Fragment::ClaimDefectClass {
            class: claim.defect_class,
        },
    ];
    if let Some(sev) = &claim.claimed_severity {
        out.push(Fragment::ClaimSeverity {
            severity: sev.clone(),
        });
    }
    out.push(Fragment::ClaimEntryPoints {
        entry_points: claim.entry_points.clone(),
    });
    out.push(Fragment::ClaimSummary {
        text: claim.summary.clone(),
    });
    out
}

fn minimal_fragments(claim: &Claim) -> Vec<Fragment> {
    vec![
        Fragment::ClaimSummary {
            text: claim.summary.clone(),
        },
        Fragment::ClaimEntryPoints {
            entry_points: claim.entry_points.clone(),
        },
    ]
}

fn verdict_fragment(rec: &VerdictRecord, current_attempt: u32) -> Fragment {
    Fragment::PriorVerdict {
        verdict_id: rec.verdict_id.clone(),
        stage: rec.stage.map(|s| s.to_string()).unwrap_or_else(|| "-".into()),
        role: rec.verdict.role,
        direction: rec.verdict.direction,
        rationale: rec.verdict.rationale.clone(),
        pre_kill: rec.attempt < current_attempt,
    }
}

fn latest_validation(state: &CampaignState, candidate: &Candidate) -> Option<ValidationStatus> {
    let attempt = candidate.attempt();
    state
        .validations
        .iter()
        .rev()
        .find(|v| v.candidate_id == candidate.id && v.attempt == attempt && !v.deferred)
        .map(|v| v.result.status)
}

pub fn derive_view(
    candidate_id: &str,
    kind: ViewKind,
    state: &CampaignState,
) -> Result<ContextView, ContextError> {
    let candidate = state
        .candidates
        .get(candidate_id)
        .ok_or_else(|| ContextError::UnknownCandidate(candidate_id.to_string()))?;
    let policy = &state.meta.view_policy;
    let attempt = candidate.attempt();
    let verdicts = state.verdicts_for(candidate_id);
    let content = match kind {
        ViewKind::ClaimOnly => claim_fragments(&candidate.claim),
        ViewKind::MinimalSummary => minimal_fragments(&candidate.claim),
        ViewKind::ColdStart => {
            let mut c = claim_fragments(&candidate.claim);
            c.push(Fragment::TargetRef {
                target: candidate.target_ref.clone(),
            });
            c
        }
        ViewKind::SelectiveSummary => {
            let mut c = Vec::new();
            for item in &policy.selective_allowlist {
                match item {
                    SelectiveItem::Claim => c.extend(claim_fragments(&candidate.claim)),
                    SelectiveItem::TargetRef => c.push(Fragment::TargetRef {
                        target: candidate.target_ref.clone(),
                    }),
                    SelectiveItem::ValidationStatus => {
                        if let Some(status) = latest_validation(state, candidate) {
                            c.push(Fragment::ValidationStatus { status });
                        }
                    }
                    SelectiveItem::AdversarialRationales => {
                        let mut kills: Vec<&VerdictRecord> = verdicts
                            .iter()
                            .copied()
                            .filter(|r| {
                                r.attempt == attempt
                                    && r.verdict.role.is_adversarial()
                                    && matches!(r.verdict.direction, Direction::Kill | Direction::PartialKill)
                            })
                            .collect();
                        kills.sort_by(|a, b| {
                            b.verdict
                                .confidence
                                .total_cmp(&a.verdict.confidence)
                                .then_with(|| a.verdict_id.cmp(&b.verdict_id))
                        });
                        c.extend(
                            kills
                                .into_iter()
                                .take(policy.top_adversarial)
                                .map(|r| verdict_fragment(r, attempt)),
                        );
                    }
                    SelectiveItem::PriorArt => {
                        if let Some(p) = &state.prepared {
                            c.push(Fragment::PriorArtBrief {
                                text: p.prior_art_brief.clone(),
                            });
                        }
                    }
                    SelectiveItem::Hotspots => {
                        if let Some(p) = &state.prepared {
                            c.push(Fragment::HotspotList {
                                hotspots: p.hotspot_list.clone(),
                            });
                        }
                    }
                }
            }
            c
        }
        ViewKind::FullSynthesis => {
            let mut c = claim_fragments(&candidate.claim);
            c.push(Fragment::TargetRef {
                target: candidate.target_ref.clone(),
            });
            if let Some(intake) = state.intake.get(candidate_id) {
                c.push(Fragment::SelfCritique {
                    text: intake.self_critique.clone(),
                });
            }
            for rec in &verdicts {
                if rec.attempt < attempt && !policy.pre_kill_in_full_synthesis {
                    continue;
                }
                if rec.verdict.role == Role::Creative {
                    if rec.attempt == attempt {
                        c.push(Fragment::CreativeRationale {
                            verdict_id: rec.verdict_id.clone(),
                            text: rec.verdict.rationale.clone(),
                        });
                    } else {
                        c.push(verdict_fragment(rec, attempt));
                    }
                } else {
                    c.push(verdict_fragment(rec, attempt));
                }
            }
            if let Some(status) = latest_validation(state, candidate) {
                c.push(Fragment::ValidationStatus { status });
            }
            if let Some(p) = &state.prepared {
                c.push(Fragment::PriorArtBrief {
                    text: p.prior_art_brief.clone(),
                });
                c.push(Fragment::HotspotList {
                    hotspots: p.hotspot_list.clone(),
                });
            }
            c
        }
    };
    Ok(ContextView::new(kind, candidate_id, content))
}

/// View kinds an agent may receive for a given stage and role.
pub fn allowed_views(stage: Option<Stage>, role: Role) -> &'static [ViewKind] {
    use ViewKind::*;
    match (stage, role) {
        (Some(Stage::A), Role::Creative) => &[FullSynthesis],
        (Some(Stage::A), Role::Adversarial) => &[ClaimOnly],
        (Some(Stage::B), Role::Creative) => &[FullSynthesis, ColdStart],
        (Some(Stage::B), Role::Adversarial | Role::Arbiter) => {
            &[FullSynthesis, ClaimOnly, SelectiveSummary]
        }
        (Some(Stage::C), Role::Validator) => &[FullSynthesis],
        (Some(Stage::C), Role::Adversarial) => &[ClaimOnly, SelectiveSummary],
        (Some(Stage::D), Role::Critic) => &[MinimalSummary],
        (None, Role::Creative) => &[ColdStart],
        _ => &[],
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub exposure_seq: u64,
    pub agent_id: String,
    pub candidate_id: String,
    pub view_kind: ViewKind,
    pub stage: Option<Stage>,
    pub role: Role,
    pub reason: String,
}

fn fragment_label(f: &Fragment) -> &'static str {
    match f {
        Fragment::ClaimTitle { .. } => "claim_title",
        Fragment::ClaimDefectClass { .. } => "claim_defect_class",
        Fragment::ClaimSeverity { .. } => "claim_severity",
        Fragment::ClaimEntryPoints { .. } => "claim_entry_points",
        Fragment::ClaimSummary { .. } => "claim_summary",
        Fragment::TargetRef { .. } => "target_ref",
        Fragment::SelfCritique { .. } => "self_critique",
        Fragment::CreativeRationale { .. } => "creative_rationale",
        Fragment::PriorVerdict { .. } => "prior_verdict",
        Fragment::ValidationStatus { .. } => "validation_status",
        Fragment::PriorArtBrief { .. } => "prior_art_brief",
        Fragment::HotspotList { .. } => "hotspot_list",
    }
}

fn exact_mismatch(expected: &[Fragment], actual: &[Fragment]) -> Option<String> {
    if expected == actual {
        return None;
    }
    let extra = actual.iter().find(|f| !expected.contains(f));
    Some(match extra {
        Some(f) => format!("unexpected {} fragment", fragment_label(f)),
        None => "fragments differ from the candidate's claim".into(),
    })
}

/// Content rule for a view kind, checked against the candidate it describes.
pub fn content_violation(
    kind: ViewKind,
    content: &[Fragment],
    candidate: &Candidate,
    policy: &ViewPolicy,
) -> Option<String> {
    match kind {
        ViewKind::ClaimOnly => exact_mismatch(&claim_fragments(&candidate.claim), content),
        ViewKind::MinimalSummary => exact_mismatch(&minimal_fragments(&candidate.claim), content),
        ViewKind::ColdStart => {
            let mut expected = claim_fragments(&candidate.claim);
            expected.push(Fragment::TargetRef {
                target: candidate.target_ref.clone(),
            });
            exact_mismatch(&expected, content)
        }
        ViewKind::SelectiveSummary => content.iter().find_map(|f| {
            let allowed = match f {
                Fragment::CreativeRationale { .. } | Fragment::SelfCritique { .. } => false,
                Fragment::PriorVerdict { role, pre_kill, .. } => {
                    *role != Role::Creative
                        && !*pre_kill
                        && policy.selective_allowlist.contains(&SelectiveItem::AdversarialRationales)
                }
                Fragment::ClaimTitle { .. }
                | Fragment::ClaimDefectClass { .. }
                | Fragment::ClaimSeverity { .. }
                | Fragment::ClaimEntryPoints { .. }
                | Fragment::ClaimSummary { .. } => {
                    policy.selective_allowlist.contains(&SelectiveItem::Claim)
                }
                Fragment::TargetRef { .. } => policy.selective_allowlist.contains(&SelectiveItem::TargetRef),
                Fragment::ValidationStatus { .. } => {
                    policy.selective_allowlist.contains(&SelectiveItem::ValidationStatus)
                }
                Fragment::PriorArtBrief { .. } => policy.selective_allowlist.contains(&SelectiveItem::PriorArt),
                Fragment::HotspotList { .. } => policy.selective_allowlist.contains(&SelectiveItem::Hotspots),
            };
            (!allowed).then(|| format!("{} not allowed in a selective summary", fragment_label(f)))
        }),
        ViewKind::FullSynthesis => {
            if policy.pre_kill_in_full_synthesis {
                None
            } else {
                content
                    .iter()
                    .any(Fragment::is_pre_kill)
                    .then(|| "pre-kill verdict in full synthesis".to_string())
            }
        }
    }
}

/// Every exposure whose view kind is illegal for the agent's stage and role,
/// or whose stored content breaks the kind's rule. At most one violation per
/// exposure.
pub fn audit_isolation(state: &CampaignState) -> Vec<Violation> {
    let policy = &state.meta.view_policy;
    state
        .exposures
        .iter()
        .filter_map(|e| {
            let violation = |reason: String| Violation {
                exposure_seq: e.seq,
                agent_id: e.agent_id.clone(),
                candidate_id: e.candidate_id.clone(),
                view_kind: e.view_kind,
                stage: e.stage,
                role: e.role,
                reason,
            };
            if !allowed_views(e.stage, e.role).contains(&e.view_kind) {
                return Some(violation(format!(
                    "{} is not a legal view for a {} at stage {}",
                    e.view_kind.as_str(),
                    e.role.as_str(),
                    e.stage.map(|s| s.to_string()).unwrap_or_else(|| "-".into())
                )));
            }
            let Some(content) = state.views.get(&e.content_digest) else {
                return Some(violation("view content not on record".into()));
            };
            if canonical_digest(content) != e.content_digest {
                return Some(violation("view content does not match its digest".into()));
            }
            let Some(candidate) = state.candidates.get(&e.candidate_id) else {
                return Some(violation("exposure for unknown candidate".into()));
            };
            content_violation(e.view_kind, content, candidate, policy).map(violation)
        })
        .collect()
}
