//! Learnings handed to the next generation wave.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::candidate::{DefectClass, GateOutcome, LifecycleState};
use crate::engine::gates::DecisionRecord;
use crate::state::CampaignState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromotedPattern {
    pub candidate_id: String,
    pub claim_summary: String,
    pub reasoning_excerpt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KilledClass {
    pub candidate_id: String,
    pub claim_summary: String,
    pub defect_class: DefectClass,
    pub kill_reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Learnings {
    pub wave: u32,
    pub promoted_patterns: Vec<PromotedPattern>,
    pub killed_classes: Vec<KilledClass>,
    pub rule_refs: Vec<String>,
}

impl Learnings {
    pub fn kills_class(&self, class: DefectClass) -> bool {
        self.killed_classes.iter().any(|k| k.defect_class == class)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("wave {0} has no completed candidates")]
pub struct EmptyWave(pub u32);

fn excerpt(state: &CampaignState, decision: &DecisionRecord) -> String {
    decision
        .deciding_verdict
        .as_deref()
        .and_then(|id| state.verdict(id))
        .map(|v| v.verdict.rationale.clone())
        .filter(|r| !r.is_empty())
        .unwrap_or_else(|| decision.reasons.join("; "))
}

/// Learnings from every candidate of waves up to `wave` that has left the
/// pipeline, in generation order.
pub fn reseed(state: &CampaignState, wave: u32) -> Result<Learnings, EmptyWave> {
    let mut out = Learnings {
        wave,
        promoted_patterns: vec![],
        killed_classes: vec![],
        rule_refs: state.rules.iter().map(|r| r.rule_id.clone()).collect(),
    };
    for cid in &state.order {
        let c = &state.candidates[cid];
        if c.origin.wave > wave {
            continue;
        }
        let last = state.decisions_for(cid).last();
        match (&c.state, last) {
            (LifecycleState::DisclosureReady, Some(_)) => {
                // The promote that carried the most argument is the creative's.
                let decisive = state
                    .decisions_for(cid)
                    .filter(|d| d.outcome == GateOutcome::Promote && d.deciding_verdict.is_some())
                    .last()
                    .or(last)
                    .expect("at least one decision");
                out.promoted_patterns.push(PromotedPattern {
                    candidate_id: cid.clone(),
                    claim_summary: c.claim.summary.clone(),
                    reasoning_excerpt: excerpt(state, decisive),
                });
            }
            (LifecycleState::Killed { .. }, Some(d)) => out.killed_classes.push(KilledClass {
                candidate_id: cid.clone(),
                claim_summary: c.claim.summary.clone(),
                defect_class: c.claim.defect_class,
                kill_reason: excerpt(state, d),
            }),
            _ => {}
        }
    }
    if out.promoted_patterns.is_empty() && out.killed_classes.is_empty() {
        return Err(EmptyWave(wave));
    }
    Ok(out)
}
