//! Task text assembly: role mandate, then injected rules, then view fragments.

use crate::agent::{Role, TaskKind};
use crate::candidate::{Stage, TargetRef};
use crate::context::{ContextView, Fragment};
use crate::rules::{self, Assertion, Rule};

pub const KILL_MARKER: &str = "[KILL MANDATE]";
pub const CREATIVE_MARKER: &str = "[CREATIVE MANDATE]";

/// Words an adversarial mandate must never contain.
pub const ADVERSARIAL_FORBIDDEN: [&str; 3] = ["improve", "suggest", "fix"];
/// Words a creative mandate must never contain.
pub const CREATIVE_FORBIDDEN: [&str; 3] = ["refute", "disprove", "kill"];

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TaskAssembly {
    pub mandate: String,
    pub rules_section: String,
    pub fragments_section: String,
    pub assertions: Vec<Assertion>,
}

impl TaskAssembly {
    pub fn text(&self) -> String {
        let mut out = String::with_capacity(
            self.mandate.len() + self.rules_section.len() + self.fragments_section.len() + 2,
        );
        out.push_str(&self.mandate);
        if !self.rules_section.is_empty() {
            out.push('\n');
            out.push_str(&self.rules_section);
        }
        if !self.fragments_section.is_empty() {
            out.push('\n');
            out.push_str(&self.fragments_section);
        }
        out
    }
}

fn authorization(target: &TargetRef) -> String {
    format!(
        "Authorization: sanctioned review of {} at {} under a coordinated disclosure engagement.\n",
        target.repository, target.revision
    )
}

pub fn mandate(role: Role, kind: TaskKind, stage: Option<Stage>, target: &TargetRef) -> String {
    let stage = stage.map(|s| format!("Stage {s}. ")).unwrap_or_default();
    let body = match (role, kind) {
        (Role::Creative, TaskKind::Confirm) => format!(
            "{CREATIVE_MARKER} {stage}Reviewers rejected this candidate unanimously. Make the strongest \
             case that the defect is real. Give a trigger path and the preconditions it needs.\n"
        ),
        (Role::Creative, _) => format!(
            "{CREATIVE_MARKER} {stage}Argue that this defect is real and reachable. Develop the \
             exploitation path: state a concrete trigger path and list every precondition. Prose \
             without a trigger path does not count.\n"
        ),
        (Role::Adversarial, TaskKind::Assess) => format!(
            "{KILL_MARKER} {stage}Challenge the claimed severity. Propose the CVSS v3.1 base vector \
             the evidence actually supports. Overstated impact must come down.\n"
        ),
        (Role::Critic, _) => format!(
            "{KILL_MARKER} {stage}You see only a summary. Destroy the claim if you can. If only one \
             subclaim fails, name that subclaim and return a partial kill.\n"
        ),
        (Role::Adversarial | Role::Arbiter, _) => format!(
            "{KILL_MARKER} {stage}Your sole job is to destroy this candidate. Find the reason it is \
             wrong. State whether your refutation is grounded in code you read, and cite it.\n"
        ),
        (Role::Validator, _) => format!(
            "{stage}Author an empirical check. Its observable must be produced by the target, never \
             computed by the check itself.\n"
        ),
        (Role::Hunter, _) => "Hunt for defects in your assigned scopes only. Attach a self-critique to \
             every candidate before reporting it.\n"
            .to_string(),
        (Role::Research, _) => "Compile historical defects and known weak spots for the named scope.\n"
            .to_string(),
    };
    format!("{body}{}", authorization(target))
}

/// Words from the forbidden list present in a mandate, for the given role.
pub fn purity_violations(role: Role, mandate: &str) -> Vec<&'static str> {
    let lower = mandate.to_lowercase();
    let (required, forbidden): (&str, &[&'static str]) = match role {
        Role::Adversarial | Role::Critic | Role::Arbiter => (KILL_MARKER, &ADVERSARIAL_FORBIDDEN),
        Role::Creative => (CREATIVE_MARKER, &CREATIVE_FORBIDDEN),
        _ => return vec![],
    };
    let mut out: Vec<&'static str> = forbidden.iter().copied().filter(|w| lower.contains(w)).collect();
    if !mandate.contains(required) {
        out.push("missing mandate marker");
    }
    out
}

pub fn render_fragments(view: &ContextView) -> String {
    let mut out = format!("Context ({}):\n", view.kind.as_str());
    for f in &view.content {
        match f {
            Fragment::ClaimTitle { text } => out.push_str(&format!("- title: {text}\n")),
            Fragment::ClaimDefectClass { class } => {
                out.push_str(&format!("- defect class: {}\n", class.as_str()))
            }
            Fragment::ClaimSeverity { severity } => {
                out.push_str(&format!("- claimed severity: {severity}\n"))
            }
            Fragment::ClaimEntryPoints { entry_points } => {
                out.push_str(&format!("- entry points: {}\n", entry_points.join(", ")))
            }
            Fragment::ClaimSummary { text } => out.push_str(&format!("- summary: {text}\n")),
            Fragment::TargetRef { target } => out.push_str(&format!(
                "- target: {} @ {}\n",
                target.repository, target.revision
            )),
            Fragment::SelfCritique { text } => out.push_str(&format!("- self-critique: {text}\n")),
            Fragment::CreativeRationale { verdict_id, text } => {
                out.push_str(&format!("- creative rationale [{verdict_id}]: {text}\n"))
            }
            Fragment::PriorVerdict {
                verdict_id,
                stage,
                role,
                direction,
                rationale,
                ..
            } => out.push_str(&format!(
                "- prior verdict [{verdict_id}] {stage} {}: {direction:?}: {rationale}\n",
                role.as_str()
            )),
            Fragment::ValidationStatus { status } => {
                out.push_str(&format!("- validation: {status:?}\n"))
            }
            Fragment::PriorArtBrief { text } => out.push_str(&format!("- prior art: {text}\n")),
            Fragment::HotspotList { hotspots } => {
                let list: Vec<String> = hotspots
                    .iter()
                    .map(|h| format!("{} ({})", h.region, h.churn))
                    .collect();
                out.push_str(&format!("- hotspots: {}\n", list.join(", ")))
            }
        }
    }
    out
}

pub fn assemble(
    role: Role,
    kind: TaskKind,
    stage: Option<Stage>,
    target: &TargetRef,
    rule_set: &[Rule],
    view: Option<&ContextView>,
) -> TaskAssembly {
    let base = TaskAssembly {
        mandate: mandate(role, kind, stage, target),
        rules_section: String::new(),
        fragments_section: view.map(render_fragments).unwrap_or_default(),
        assertions: vec![],
    };
    rules::inject(rule_set, base)
}
