//! Gate decision rules. Pure functions over verdict tracks, so every stored
//! decision can be re-derived during an audit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{Direction, Role, Verdict};
use crate::candidate::{GateOutcome, Stage};
use crate::context::ViewKind;
use crate::state::CampaignState;
use crate::validation::cvss::{recalibrate, Recalibration, SeverityVector};
use crate::validation::{ContaminationCheck, ValidationStatus};

/// One answered roster slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub verdict_id: String,
    pub view: ViewKind,
    pub model_family: String,
    pub verdict: Verdict,
}

impl Track {
    fn role(&self) -> Role {
        self.verdict.role
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GateVerdict {
    pub outcome: Option<GateOutcome>,
    pub human_review: bool,
    pub reasons: Vec<String>,
    pub deciding_verdict: Option<String>,
    pub cold_start_divergence: bool,
    pub unanimity_warning: bool,
    pub reentry_target: Option<Stage>,
    pub reentry_limit_hit: bool,
    pub recalibration: Option<Recalibration>,
}

impl GateVerdict {
    pub fn outcome(&self) -> GateOutcome {
        self.outcome.expect("decided")
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GateError {
    #[error("roster incomplete at stage {stage}: {detail}")]
    RosterIncomplete { stage: Stage, detail: String },
    #[error("stage C reached without a validation attempt")]
    MissingValidation,
    #[error("critic family {0} equals the campaign default family")]
    SameFamilyCritic(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub decision_id: String,
    pub candidate_id: String,
    pub stage: Stage,
    pub outcome: GateOutcome,
    pub verdict_refs: Vec<String>,
    pub cold_start_divergence: bool,
    pub unanimity_warning: bool,
    pub human_review: bool,
    #[serde(default)]
    pub reasons: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deciding_verdict: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reentry_target: Option<Stage>,
    #[serde(default)]
    pub reentry_limit_hit: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recalibration: Option<Recalibration>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_ref: Option<String>,
    /// Stage-D re-entry budget in force when the decision was made.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_reentries: Option<u32>,
    pub window: u32,
    pub attempt: u32,
    pub round: u32,
    pub timestamp: u64,
}

/// True when at least three verdicts take a position and all take the same one.
pub fn unanimity_monitor(directions: &[Direction]) -> bool {
    let positions: Vec<Direction> = directions
        .iter()
        .copied()
        .filter(|d| d.counts_toward_unanimity())
        .collect();
    positions.len() >= 3 && positions.iter().all(|d| *d == positions[0])
}

fn directions(tracks: &[&Track]) -> Vec<Direction> {
    tracks.iter().map(|t| t.verdict.direction).collect()
}

fn first_grounded_kill<'a>(tracks: impl IntoIterator<Item = &'a Track>) -> Option<&'a Track> {
    tracks.into_iter().find(|t| t.verdict.is_code_grounded_kill())
}

pub fn decide_stage_a(creative: &[Track], adversarial: &[Track]) -> Result<GateVerdict, GateError> {
    if creative.len() != 1 || adversarial.len() != 2 {
        return Err(GateError::RosterIncomplete {
            stage: Stage::A,
            detail: format!("{} creative, {} adversarial", creative.len(), adversarial.len()),
        });
    }
    let all: Vec<&Track> = creative.iter().chain(adversarial).collect();
    let mut g = GateVerdict {
        unanimity_warning: unanimity_monitor(&directions(&all)),
        ..GateVerdict::default()
    };
    let c = &creative[0];
    if c.verdict.direction == Direction::Abstain {
        g.human_review = true;
        g.reasons.push("creative abstained".into());
    }
    if let Some(k) = first_grounded_kill(adversarial) {
        g.outcome = Some(GateOutcome::Kill);
        g.deciding_verdict = Some(k.verdict_id.clone());
        g.reasons.push("code-grounded refutation".into());
    } else if c.verdict.has_plausible_exploitation() {
        g.outcome = Some(GateOutcome::Promote);
        g.deciding_verdict = Some(c.verdict_id.clone());
    } else {
        g.outcome = Some(GateOutcome::Kill);
        g.deciding_verdict = Some(c.verdict_id.clone());
        g.reasons.push("no structured exploitation argument".into());
    }
    Ok(g)
}

fn stance(d: Direction) -> i32 {
    match d {
        Direction::Promote => 1,
        Direction::Kill | Direction::PartialKill => -1,
        Direction::Abstain | Direction::Refused => 0,
    }
}

/// `creative` holds the FullSynthesis and ColdStart creatives, `adversarial`
/// the three fixed adversaries, `arbiters` any extra informed panel.
pub fn decide_stage_b(
    creative: &[Track],
    adversarial: &[Track],
    arbiters: &[Track],
) -> Result<GateVerdict, GateError> {
    let has = |ts: &[Track], v: ViewKind| ts.iter().filter(|t| t.view == v).count();
    if creative.len() != 2
        || has(creative, ViewKind::FullSynthesis) != 1
        || has(creative, ViewKind::ColdStart) != 1
        || adversarial.len() != 3
        || has(adversarial, ViewKind::ClaimOnly) != 1
    {
        return Err(GateError::RosterIncomplete {
            stage: Stage::B,
            detail: format!("{} creative, {} adversarial", creative.len(), adversarial.len()),
        });
    }
    let all: Vec<&Track> = creative.iter().chain(adversarial).chain(arbiters).collect();
    let mut g = GateVerdict {
        unanimity_warning: unanimity_monitor(&directions(&all)),
        ..GateVerdict::default()
    };

    let informed: i32 = all
        .iter()
        .filter(|t| matches!(t.view, ViewKind::FullSynthesis | ViewKind::SelectiveSummary))
        .map(|t| stance(t.verdict.direction))
        .sum();
    let majority = informed.signum();
    let naive = creative
        .iter()
        .filter(|t| t.view == ViewKind::ColdStart)
        .chain(adversarial.iter().filter(|t| t.view == ViewKind::ClaimOnly));
    for t in naive {
        let s = stance(t.verdict.direction);
        if majority != 0 && s != 0 && s != majority {
            g.cold_start_divergence = true;
        }
    }
    if g.cold_start_divergence {
        g.human_review = true;
        g.reasons.push("naive reviewer diverges from informed majority".into());
    }

    if let Some(k) = first_grounded_kill(adversarial.iter().chain(arbiters)) {
        g.outcome = Some(GateOutcome::Kill);
        g.deciding_verdict = Some(k.verdict_id.clone());
        g.reasons.push("code-grounded refutation".into());
    } else if let Some(c) = creative.iter().find(|t| t.verdict.has_plausible_exploitation()) {
        g.outcome = Some(GateOutcome::Promote);
        g.deciding_verdict = Some(c.verdict_id.clone());
    } else {
        if creative.iter().all(|t| t.verdict.direction == Direction::Abstain) {
            g.human_review = true;
            g.reasons.push("creatives abstained".into());
        }
        g.outcome = Some(GateOutcome::Kill);
        g.deciding_verdict = Some(creative[0].verdict_id.clone());
        g.reasons.push("no structured exploitation argument".into());
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationInput {
    pub status: ValidationStatus,
    pub contamination: ContaminationCheck,
    pub gate_disabled: bool,
}

pub fn decide_stage_c(
    validation: Option<&ValidationInput>,
    severity_before: Option<&SeverityVector>,
    assessments: &[Track],
) -> Result<GateVerdict, GateError> {
    let v = validation.ok_or(GateError::MissingValidation)?;
    let mut g = GateVerdict::default();
    if v.contamination == ContaminationCheck::Fail {
        g.human_review = true;
        g.reasons.push("check rejected as self-contaminated".into());
    }
    let proposals: Vec<SeverityVector> = assessments
        .iter()
        .filter_map(|t| t.verdict.severity_proposal.clone())
        .collect();
    let recal = || {
        severity_before
            .filter(|_| !proposals.is_empty())
            .map(|before| recalibrate(before, &proposals))
    };
    match v.status {
        ValidationStatus::Refuted => {
            g.outcome = Some(GateOutcome::Kill);
            g.reasons.push("empirical refutation".into());
        }
        ValidationStatus::Confirmed => {
            g.outcome = Some(GateOutcome::Promote);
            g.recalibration = recal();
        }
        ValidationStatus::Infeasible => {
            g.outcome = Some(GateOutcome::PromoteProvisional);
            g.reasons.push(if v.gate_disabled {
                "empirical gate disabled".into()
            } else {
                "validation infeasible".into()
            });
            g.recalibration = recal();
        }
    }
    Ok(g)
}

pub fn decide_stage_d(
    critics: &[Track],
    default_family: &str,
    round: u32,
    max_reentries: u32,
) -> Result<GateVerdict, GateError> {
    if critics.is_empty() {
        return Err(GateError::RosterIncomplete {
            stage: Stage::D,
            detail: "no critic verdicts".into(),
        });
    }
    if let Some(t) = critics.iter().find(|t| t.model_family == default_family) {
        return Err(GateError::SameFamilyCritic(t.model_family.clone()));
    }
    let all: Vec<&Track> = critics.iter().collect();
    let mut g = GateVerdict {
        unanimity_warning: unanimity_monitor(&directions(&all)),
        ..GateVerdict::default()
    };
    if let Some(k) = critics.iter().find(|t| t.verdict.direction == Direction::Kill) {
        g.outcome = Some(GateOutcome::Kill);
        g.deciding_verdict = Some(k.verdict_id.clone());
        g.reasons.push("cross-family critic kill".into());
    } else if let Some(p) = critics.iter().find(|t| t.verdict.direction == Direction::PartialKill) {
        g.deciding_verdict = Some(p.verdict_id.clone());
        if round >= max_reentries {
            g.outcome = Some(GateOutcome::Kill);
            g.human_review = true;
            g.reentry_limit_hit = true;
            g.reasons.push(format!("partial kill after {round} re-entries"));
        } else {
            g.outcome = Some(GateOutcome::PartialKillReentry);
            g.reentry_target = Some(Stage::B);
            g.reasons.push(format!(
                "refuted subclaim: {}",
                p.verdict.refuted_subclaim.clone().unwrap_or_default()
            ));
        }
    } else {
        g.outcome = Some(GateOutcome::Promote);
    }
    Ok(g)
}

/// Recompute a stored decision from the verdicts and validation it references.
pub fn rederive(decision: &DecisionRecord, state: &CampaignState, default_family: &str) -> Result<GateOutcome, GateError> {
    let tracks: Vec<Track> = decision
        .verdict_refs
        .iter()
        .filter_map(|id| state.verdict(id))
        .map(|r| Track {
            verdict_id: r.verdict_id.clone(),
            view: r.view_kind.unwrap_or(ViewKind::FullSynthesis),
            model_family: r.model_family.clone(),
            verdict: r.verdict.clone(),
        })
        .collect();
    let by = |f: &dyn Fn(&Track) -> bool| tracks.iter().filter(|t| f(t)).cloned().collect::<Vec<_>>();
    let g = match decision.stage {
        Stage::A => decide_stage_a(
            &by(&|t| t.role() == Role::Creative),
            &by(&|t| t.role() == Role::Adversarial),
        )?,
        Stage::B => decide_stage_b(
            &by(&|t| t.role() == Role::Creative),
            &by(&|t| t.role() == Role::Adversarial),
            &by(&|t| t.role() == Role::Arbiter),
        )?,
        Stage::C => {
            let validation = decision
                .validation_ref
                .as_ref()
                .and_then(|id| state.validations.iter().find(|v| &v.validation_id == id))
                .map(|v| ValidationInput {
                    status: v.result.status,
                    contamination: v.result.contamination_check,
                    gate_disabled: v.gate_disabled,
                });
            let before = decision.recalibration.as_ref().map(|r| &r.before);
            decide_stage_c(validation.as_ref(), before, &tracks)?
        }
        Stage::D => decide_stage_d(
            &tracks,
            default_family,
            decision.round,
            decision.max_reentries.unwrap_or(u32::MAX),
        )?,
    };
    Ok(g.outcome())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::tests::verdict;

    fn track(id: &str, role: Role, view: ViewKind, direction: Direction) -> Track {
        let mut v = verdict(role, direction, "r");
        if direction == Direction::PartialKill {
            v.refuted_subclaim = Some("remote trigger".into());
        }
        Track {
            verdict_id: id.into(),
            view,
            model_family: "family-1".into(),
            verdict: v,
        }
    }

    use Direction::*;
    use ViewKind::*;

    #[test]
    fn stage_a_promote_and_kill() {
        let c = [track("c", Role::Creative, FullSynthesis, Promote)];
        let a = [
            track("a1", Role::Adversarial, ClaimOnly, Promote),
            track("a2", Role::Adversarial, ClaimOnly, Promote),
        ];
        let g = decide_stage_a(&c, &a).unwrap();
        assert_eq!(g.outcome(), GateOutcome::Promote);
        assert!(g.unanimity_warning);

        let a = [
            track("a1", Role::Adversarial, ClaimOnly, Kill),
            track("a2", Role::Adversarial, ClaimOnly, Promote),
        ];
        let g = decide_stage_a(&c, &a).unwrap();
        assert_eq!(g.outcome(), GateOutcome::Kill);
        assert_eq!(g.deciding_verdict.as_deref(), Some("a1"));
    }

    #[test]
    fn stage_a_creative_abstain_flags_human() {
        let c = [track("c", Role::Creative, FullSynthesis, Abstain)];
        let a = [
            track("a1", Role::Adversarial, ClaimOnly, Promote),
            track("a2", Role::Adversarial, ClaimOnly, Promote),
        ];
        let g = decide_stage_a(&c, &a).unwrap();
        assert_eq!(g.outcome(), GateOutcome::Kill);
        assert!(g.human_review);
    }

    #[test]
    fn stage_a_prose_only_fails() {
        let mut c = track("c", Role::Creative, FullSynthesis, Promote);
        c.verdict.exploitation = None;
        let a = [
            track("a1", Role::Adversarial, ClaimOnly, Promote),
            track("a2", Role::Adversarial, ClaimOnly, Promote),
        ];
        assert_eq!(decide_stage_a(&[c], &a).unwrap().outcome(), GateOutcome::Kill);
    }

    #[test]
    fn stage_a_roster_incomplete() {
        let c = [track("c", Role::Creative, FullSynthesis, Promote)];
        let a = [track("a1", Role::Adversarial, ClaimOnly, Promote)];
        assert!(matches!(decide_stage_a(&c, &a), Err(GateError::RosterIncomplete { .. })));
    }

    fn b_roster(naive_adv: Direction) -> (Vec<Track>, Vec<Track>) {
        (
            vec![
                track("cf", Role::Creative, FullSynthesis, Promote),
                track("cc", Role::Creative, ColdStart, Promote),
            ],
            vec![
                track("af", Role::Adversarial, FullSynthesis, Promote),
                track("an", Role::Adversarial, ClaimOnly, naive_adv),
                track("as", Role::Adversarial, SelectiveSummary, Promote),
            ],
        )
    }

    #[test]
    fn stage_b_clean_promote() {
        let (c, a) = b_roster(Promote);
        let g = decide_stage_b(&c, &a, &[]).unwrap();
        assert_eq!(g.outcome(), GateOutcome::Promote);
        assert!(!g.cold_start_divergence);
    }

    #[test]
    fn stage_b_naive_kill_wins_and_diverges() {
        let (c, a) = b_roster(Kill);
        let g = decide_stage_b(&c, &a, &[]).unwrap();
        assert_eq!(g.outcome(), GateOutcome::Kill);
        assert!(g.cold_start_divergence);
        assert!(g.human_review);
    }

    #[test]
    fn stage_b_unanimous_kill_warns() {
        let c = vec![
            track("cf", Role::Creative, FullSynthesis, Kill),
            track("cc", Role::Creative, ColdStart, Kill),
        ];
        let a = vec![
            track("af", Role::Adversarial, FullSynthesis, Kill),
            track("an", Role::Adversarial, ClaimOnly, Kill),
            track("as", Role::Adversarial, SelectiveSummary, Kill),
        ];
        let g = decide_stage_b(&c, &a, &[]).unwrap();
        assert_eq!(g.outcome(), GateOutcome::Kill);
        assert!(g.unanimity_warning);
    }

    #[test]
    fn unanimity_examples() {
        assert!(unanimity_monitor(&[Kill, Kill, Kill]));
        assert!(!unanimity_monitor(&[Promote, Kill, Promote]));
        assert!(unanimity_monitor(&[Promote; 10]));
        assert!(!unanimity_monitor(&[Kill, Kill, Abstain]));
        assert!(unanimity_monitor(&[Kill, Kill, Abstain, Refused, Kill]));
    }

    fn sev(v: &str) -> SeverityVector {
        SeverityVector::from_vector(v).unwrap()
    }

    #[test]
    fn stage_c_rules() {
        let input = |status| ValidationInput {
            status,
            contamination: ContaminationCheck::Pass,
            gate_disabled: false,
        };
        assert_eq!(
            decide_stage_c(Some(&input(ValidationStatus::Refuted)), None, &[]).unwrap().outcome(),
            GateOutcome::Kill
        );
        assert_eq!(
            decide_stage_c(Some(&input(ValidationStatus::Infeasible)), None, &[]).unwrap().outcome(),
            GateOutcome::PromoteProvisional
        );
        assert_eq!(decide_stage_c(None, None, &[]).unwrap_err(), GateError::MissingValidation);

        let claimed = sev("AV:N/AC:H/PR:N/UI:N/S:U/C:H/I:N/A:N");
        let mut t = track("s1", Role::Adversarial, ClaimOnly, Promote);
        t.verdict.severity_proposal = Some(sev("AV:L/AC:H/PR:N/UI:N/S:U/C:H/I:N/A:N"));
        let g = decide_stage_c(Some(&input(ValidationStatus::Confirmed)), Some(&claimed), &[t]).unwrap();
        assert_eq!(g.outcome(), GateOutcome::Promote);
        let r = g.recalibration.unwrap();
        assert_eq!(r.before.score, "5.9");
        assert!(r.after.score_tenths() < 59);
    }

    #[test]
    fn stage_d_rules() {
        let mut crit = track("k", Role::Critic, MinimalSummary, Kill);
        crit.model_family = "family-2".into();
        assert_eq!(decide_stage_d(&[crit.clone()], "family-1", 0, 2).unwrap().outcome(), GateOutcome::Kill);
        let mut partial = track("p", Role::Critic, MinimalSummary, PartialKill);
        partial.model_family = "family-2".into();
        let g = decide_stage_d(&[partial.clone()], "family-1", 0, 2).unwrap();
        assert_eq!(g.outcome(), GateOutcome::PartialKillReentry);
        assert_eq!(g.reentry_target, Some(Stage::B));
        let g = decide_stage_d(&[partial], "family-1", 2, 2).unwrap();
        assert_eq!(g.outcome(), GateOutcome::Kill);
        assert!(g.reentry_limit_hit);
        crit.model_family = "family-1".into();
        assert!(matches!(decide_stage_d(&[crit], "family-1", 0, 2), Err(GateError::SameFamilyCritic(_))));
    }
}
