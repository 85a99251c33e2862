//! Ground-truth worlds and the scripted agents that live in them.
//!
//! Every agent's answer is a pure function of the world seed and a key built
//! from the candidate, stage, roster slot, round and attempt. Reassigning a
//! refused slot to a senior agent therefore reproduces the same verdict.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{
    AgentBackend, AgentSpec, BackendKind, BackendReply, Direction, Exploitation, GatewayError, Proposal, ResponseBody,
    Role, TaskKind, TaskSpec, Tier, ValidationReport, Verdict,
};
use crate::candidate::{Claim, DefectClass, SourceStratum, Stage};
use crate::context::{ContextView, Hotspot};
use crate::engine::prepare::TargetProbe;
use crate::engine::{CampaignConfig, PipelineConfig, TargetConfig, ValidationConfig};
use crate::util::keyed_bernoulli;
use crate::validation::cvss::SeverityVector;
use crate::validation::{
    CheckKind, CheckSpec, ExpectedSignal, ObservableSource, OracleQuery, ScriptedOracle, ValidationStatus,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundTruth {
    TruePositive,
    FalsePositive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    /// Each agent errs on its own.
    #[default]
    ReasoningError,
    /// Same-family agents may share one error draw.
    CorrelatedPriorError,
}

fn yes() -> bool {
    true
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSpec {
    pub id: String,
    pub title: String,
    pub defect_class: DefectClass,
    #[serde(default)]
    pub summary: String,
    #[serde(default)]
    pub entry_points: Vec<String>,
    pub scope: String,
    #[serde(default)]
    pub source: Option<SourceStratum>,
    #[serde(default = "one")]
    pub wave: u32,
    pub ground_truth: GroundTruth,
    #[serde(default)]
    pub error_class: ErrorClass,
    /// Claimed severity is above what assessors find.
    #[serde(default)]
    pub overclaimed: bool,
    #[serde(default)]
    pub claimed_vector: Option<String>,
    #[serde(default)]
    pub assessed_vector: Option<String>,
    /// Hunter attaches a self-critique. Without one, intake rejects the candidate.
    #[serde(default = "yes")]
    pub self_critique: bool,
    /// A true positive with one overstated subclaim that a correct critic
    /// refutes on the first Stage-D visit.
    #[serde(default)]
    pub refutable_subclaim: Option<String>,
    /// Every reviewer kills this candidate until it has been resurrected once.
    #[serde(default)]
    pub requires_uplift: bool,
    /// The scripted validator writes a check that observes its own output.
    #[serde(default)]
    pub contaminated_check: bool,
    /// Overrides the world's local infeasibility probability.
    #[serde(default)]
    pub infeasible_probability: Option<f64>,
}

impl CandidateSpec {
    pub fn is_true(&self) -> bool {
        self.ground_truth == GroundTruth::TruePositive
    }

    pub fn correlated(&self) -> bool {
        self.error_class == ErrorClass::CorrelatedPriorError
    }

    pub fn claim(&self) -> Claim {
        Claim {
            title: self.title.clone(),
            defect_class: self.defect_class,
            claimed_severity: self
                .claimed_vector
                .as_deref()
                .and_then(|v| SeverityVector::from_vector(v).ok()),
            entry_points: self.entry_points.clone(),
            summary: if self.summary.is_empty() {
                self.title.clone()
            } else {
                self.summary.clone()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentModel {
    pub epsilon: f64,
    pub pi: f64,
    pub refusal_probability: f64,
    pub senior_refusal_probability: f64,
    pub family_epsilon: BTreeMap<String, f64>,
    /// Task kinds every workhorse refuses.
    pub refuse_tasks: Vec<TaskKind>,
}

impl Default for AgentModel {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            pi: 0.6,
            refusal_probability: 0.0,
            senior_refusal_probability: 0.0,
            family_epsilon: BTreeMap::new(),
            refuse_tasks: vec![],
        }
    }
}

impl AgentModel {
    pub fn epsilon_for(&self, family: &str) -> f64 {
        self.family_epsilon.get(family).copied().unwrap_or(self.epsilon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationModel {
    pub infeasible_probability: f64,
    pub remote_infeasible_probability: f64,
    /// Probability that a feasible check reports the wrong status.
    pub validator_error: f64,
}

impl Default for ValidationModel {
    fn default() -> Self {
        Self {
            infeasible_probability: 0.1,
            remote_infeasible_probability: 0.0,
            validator_error: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorArt {
    pub scope: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldTarget {
    pub repository: String,
    pub tags: Vec<String>,
    pub head: Option<String>,
    pub subsystems: Vec<String>,
    pub domain_tags: Vec<String>,
    pub hotspots: Vec<Hotspot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    #[serde(default)]
    pub seed: u64,
    pub target: WorldTarget,
    #[serde(default)]
    pub prior_art: Vec<PriorArt>,
    #[serde(default)]
    pub agent_model: AgentModel,
    #[serde(default)]
    pub validation: ValidationModel,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub candidates: Vec<CandidateSpec>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("cannot parse world: {0}")]
    Parse(String),
    #[error("invalid world: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
}

impl WorldError {
    pub fn code(&self) -> &'static str {
        match self {
            WorldError::Parse(_) => "WorldParse",
            WorldError::Invalid(_) => "InvalidWorld",
            WorldError::Io { .. } => "Io",
        }
    }
}

fn check_probability(name: &str, p: f64) -> Result<(), WorldError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(WorldError::Invalid(format!("{name} = {p} is outside [0, 1]")))
    }
}

impl WorldSpec {
    pub fn from_toml(text: &str) -> Result<Self, WorldError> {
        let spec: WorldSpec = toml::from_str(text).map_err(|e| WorldError::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, WorldError> {
        let text = std::fs::read_to_string(path).map_err(|e| WorldError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("world specs serialize")
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let m = &self.agent_model;
        check_probability("epsilon", m.epsilon)?;
        check_probability("pi", m.pi)?;
        check_probability("refusal_probability", m.refusal_probability)?;
        check_probability("senior_refusal_probability", m.senior_refusal_probability)?;
        for (f, e) in &m.family_epsilon {
            check_probability(&format!("family_epsilon.{f}"), *e)?;
        }
        let v = &self.validation;
        check_probability("infeasible_probability", v.infeasible_probability)?;
        check_probability("remote_infeasible_probability", v.remote_infeasible_probability)?;
        check_probability("validator_error", v.validator_error)?;
        let mut ids = std::collections::BTreeSet::new();
        for c in &self.candidates {
            if !ids.insert(c.id.as_str()) {
                return Err(WorldError::Invalid(format!("candidate id {} is not unique", c.id)));
            }
            if !self.target.subsystems.contains(&c.scope) {
                return Err(WorldError::Invalid(format!("{}: scope {} is not a subsystem", c.id, c.scope)));
            }
            if c.wave == 0 {
                return Err(WorldError::Invalid(format!("{}: waves start at 1", c.id)));
            }
            if let Some(p) = c.infeasible_probability {
                check_probability(&format!("{}.infeasible_probability", c.id), p)?;
            }
            c.claim()
                .validate()
                .map_err(|e| WorldError::Invalid(format!("{}: {e}", c.id)))?;
            for (name, vec) in [("claimed_vector", &c.claimed_vector), ("assessed_vector", &c.assessed_vector)] {
                if let Some(v) = vec {
                    SeverityVector::from_vector(v).map_err(|e| WorldError::Invalid(format!("{}.{name}: {e}", c.id)))?;
                }
            }
            if c.overclaimed {
                let (Some(claimed), Some(assessed)) = (&c.claimed_vector, &c.assessed_vector) else {
                    return Err(WorldError::Invalid(format!(
                        "{}: overclaimed needs claimed_vector and assessed_vector",
                        c.id
                    )));
                };
                let score = |v: &str| SeverityVector::from_vector(v).map(|s| s.score_tenths()).unwrap_or(0);
                if score(assessed) >= score(claimed) {
                    return Err(WorldError::Invalid(format!("{}: overclaimed but assessed score is not lower", c.id)));
                }
            }
        }
        Ok(())
    }

    pub fn candidate(&self, id: &str) -> Option<&CandidateSpec> {
        self.candidates.iter().find(|c| c.id == id)
    }

    /// Ground-truth labels keyed by candidate id (`true` = real defect).
    pub fn truth(&self) -> BTreeMap<String, bool> {
        self.candidates.iter().map(|c| (c.id.clone(), c.is_true())).collect()
    }

    /// Campaign configuration that runs this world with the scripted backend.
    pub fn campaign_config(&self, campaign_id: &str, seed: u64) -> CampaignConfig {
        CampaignConfig {
            campaign_id: campaign_id.to_string(),
            seed,
            backend: BackendKind::Scripted,
            target: TargetConfig {
                repository: self.target.repository.clone(),
                local_path: None,
                subsystems: self.target.subsystems.clone(),
                domain_tags: self.target.domain_tags.clone(),
            },
            pipeline: self.pipeline.clone(),
            validation: ValidationConfig::default(),
            live: None,
            rules_file: None,
            hotspots: self.target.hotspots.clone(),
        }
    }

    /// A small editable world with `n` candidates, alternating labels.
    pub fn template(n: usize, seed: u64) -> Self {
        let subsystems: Vec<String> = ["parsing", "memory", "crypto", "io"].iter().map(|s| s.to_string()).collect();
        let classes = [DefectClass::MemorySafety, DefectClass::Logic, DefectClass::CryptoOracle, DefectClass::Other];
        let candidates = (0..n)
            .map(|i| CandidateSpec {
                id: format!("w{:02}", i + 1),
                title: format!("candidate {}", i + 1),
                defect_class: classes[i % classes.len()],
                summary: String::new(),
                entry_points: vec![format!("src/{}.c:{}", subsystems[i % subsystems.len()], 10 * (i + 1))],
                scope: subsystems[i % subsystems.len()].clone(),
                source: None,
                wave: 1,
                ground_truth: if i % 2 == 0 {
                    GroundTruth::TruePositive
                } else {
                    GroundTruth::FalsePositive
                },
                error_class: if i % 3 == 2 {
                    ErrorClass::CorrelatedPriorError
                } else {
                    ErrorClass::ReasoningError
                },
                overclaimed: false,
                claimed_vector: Some("AV:L/AC:L/PR:L/UI:N/S:U/C:H/I:H/A:H".into()),
                assessed_vector: None,
                self_critique: true,
                refutable_subclaim: None,
                requires_uplift: false,
                contaminated_check: false,
                infeasible_probability: None,
            })
            .collect();
        WorldSpec {
            seed,
            target: WorldTarget {
                repository: "example/libdemo".into(),
                tags: vec!["v1.0.0".into(), "v1.1.0".into(), "v1.2.0-rc1".into()],
                head: Some("0000000".into()),
                subsystems,
                domain_tags: vec!["c".into()],
                hotspots: vec![],
            },
            prior_art: vec![],
            agent_model: AgentModel::default(),
            validation: ValidationModel::default(),
            pipeline: PipelineConfig::default(),
            candidates,
        }
    }
}

/// A world bound to one seed. Cheap to clone; trials re-seed it.
#[derive(Debug, Clone)]
pub struct World {
    pub spec: Arc<WorldSpec>,
    pub seed: u64,
}

/// Latent draws shared by every verdict of one candidate.
struct Draw<'a> {
    world: &'a World,
    c: &'a CandidateSpec,
}

impl Draw<'_> {
    fn bern(&self, parts: &[&str], p: f64) -> bool {
        let mut key = vec![self.c.id.as_str()];
        key.extend_from_slice(parts);
        keyed_bernoulli(self.world.seed, &key, p)
    }

    /// Whether the agent in `slot` of `family` gets this candidate wrong.
    fn errs(&self, family: &str, key: &[&str]) -> bool {
        let eps = self.world.spec.agent_model.epsilon_for(family);
        if self.c.correlated() && self.bern(&["coupled", family], self.world.spec.agent_model.pi) {
            return self.bern(&["shared", family], eps);
        }
        let mut parts = vec!["err"];
        parts.extend_from_slice(key);
        self.bern(&parts, eps)
    }
}

fn stage_key(stage: Option<Stage>) -> &'static str {
    match stage {
        Some(Stage::A) => "A",
        Some(Stage::B) => "B",
        Some(Stage::C) => "C",
        Some(Stage::D) => "D",
        None => "-",
    }
}

impl World {
    pub fn new(spec: WorldSpec) -> Self {
        let seed = spec.seed;
        Self {
            spec: Arc::new(spec),
            seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            spec: self.spec.clone(),
            seed,
        }
    }

    fn refuses(&self, agent: &AgentSpec, task: &TaskSpec) -> bool {
        let m = &self.spec.agent_model;
        let p = match agent.tier {
            Tier::Workhorse if m.refuse_tasks.contains(&task.kind) => return true,
            Tier::Workhorse => m.refusal_probability,
            Tier::Senior => m.senior_refusal_probability,
        };
        let tier = match agent.tier {
            Tier::Workhorse => "workhorse",
            Tier::Senior => "senior",
        };
        let (round, attempt) = (task.round.to_string(), task.attempt.to_string());
        keyed_bernoulli(
            self.seed,
            &[
                "refuse",
                task.candidate_id.as_deref().unwrap_or("-"),
                stage_key(task.stage),
                &task.slot,
                &round,
                &attempt,
                tier,
            ],
            p,
        )
    }

    fn verdict(&self, agent: &AgentSpec, task: &TaskSpec) -> Result<Verdict, GatewayError> {
        let cid = task.candidate_id.as_deref().unwrap_or_default();
        let c = self
            .spec
            .candidate(cid)
            .ok_or_else(|| GatewayError::BackendUnavailable(format!("world has no candidate {cid}")))?;
        let draw = Draw { world: self, c };
        let (round, attempt) = (task.round.to_string(), task.attempt.to_string());
        let stage = if task.kind == TaskKind::Confirm {
            "hook"
        } else {
            stage_key(task.stage)
        };
        let wrong = draw.errs(&agent.model_family, &[stage, &task.slot, &round, &attempt]);
        let blocked = c.requires_uplift && task.attempt == 0 && task.kind != TaskKind::Confirm;
        let direction = if blocked {
            Direction::Kill
        } else {
            match (c.is_true(), wrong) {
                (true, false) if task.kind == TaskKind::Critique && task.round == 0 && c.refutable_subclaim.is_some() => {
                    Direction::PartialKill
                }
                (true, false) | (false, true) => Direction::Promote,
                (true, true) | (false, false) => Direction::Kill,
            }
        };
        let entry = c.entry_points.first().cloned().unwrap_or_else(|| c.scope.clone());
        let mut v = Verdict {
            agent_id: agent.agent_id.clone(),
            role: agent.role,
            direction,
            rationale: String::new(),
            evidence_refs: vec![],
            code_grounded: None,
            confidence: 0.8,
            exploitation: None,
            refuted_subclaim: None,
            severity_proposal: None,
            annotation: None,
        };
        match direction {
            Direction::Promote => {
                v.rationale = format!("no refutation of {} at {entry}", c.title);
                if matches!(agent.role, Role::Creative) {
                    v.rationale = format!("{} is reachable from {entry}", c.title);
                    v.exploitation = Some(Exploitation {
                        trigger_path: entry.clone(),
                        preconditions: vec![format!("attacker controls input to {}", c.scope)],
                    });
                }
            }
            Direction::Kill => {
                v.rationale = format!("{entry} does not permit {}", c.title);
                v.code_grounded = Some(true);
                v.evidence_refs = vec![entry.clone()];
            }
            Direction::PartialKill => {
                let sub = c.refutable_subclaim.clone().unwrap_or_default();
                v.rationale = format!("subclaim does not hold: {sub}");
                v.refuted_subclaim = Some(sub);
                v.evidence_refs = vec![entry.clone()];
            }
            Direction::Abstain | Direction::Refused => {}
        }
        if task.kind == TaskKind::Assess {
            let vector = if c.overclaimed {
                c.assessed_vector.as_deref()
            } else {
                c.assessed_vector.as_deref().or(c.claimed_vector.as_deref())
            };
            v.severity_proposal = vector.and_then(|s| SeverityVector::from_vector(s).ok());
        }
        Ok(v)
    }

    fn hunt(&self, task: &TaskSpec) -> Vec<Proposal> {
        let Some(brief) = &task.hunt else {
            return vec![];
        };
        self.spec
            .candidates
            .iter()
            .filter(|c| c.wave == brief.wave && brief.scopes.contains(&c.scope))
            .filter(|c| {
                brief.wave < 2 || !brief.learnings.as_ref().is_some_and(|l| l.kills_class(c.defect_class))
            })
            .map(|c| Proposal {
                proposed_id: Some(c.id.clone()),
                claim: c.claim(),
                source_stratum: c.source.unwrap_or(brief.source_stratum),
                scope_stratum: c.scope.clone(),
                self_critique: c
                    .self_critique
                    .then(|| format!("{} may be unreachable from public entry points", c.title)),
            })
            .collect()
    }

    fn check(&self, task: &TaskSpec) -> CheckSpec {
        let cid = task.candidate_id.clone().unwrap_or_default();
        let contaminated = self.spec.candidate(&cid).is_some_and(|c| c.contaminated_check);
        CheckSpec {
            candidate_id: cid,
            kind: CheckKind::ScriptedOracle,
            probes: vec![],
            expected_observable: "target process reports the claimed fault".into(),
            expected: ExpectedSignal::ExitCode { code: 1 },
            observable_source: if contaminated {
                ObservableSource::PocInternal
            } else {
                ObservableSource::Target
            },
        }
    }

    fn research(&self, task: &TaskSpec) -> String {
        let scope = task.scope.as_deref().unwrap_or_default();
        self.spec
            .prior_art
            .iter()
            .filter(|p| p.scope == scope)
            .map(|p| p.text.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

impl AgentBackend for World {
    fn invoke(&self, agent: &AgentSpec, task: &TaskSpec, _view: Option<&ContextView>) -> Result<BackendReply, GatewayError> {
        let body = if self.refuses(agent, task) {
            ResponseBody::Refusal {
                refusal_reason: "declined by policy".into(),
            }
        } else {
            match task.kind {
                TaskKind::Hunt => ResponseBody::CandidateBatch {
                    candidates: self.hunt(task),
                },
                TaskKind::Research => ResponseBody::ResearchBrief {
                    text: self.research(task),
                },
                TaskKind::Validate => ResponseBody::ValidationReport(ValidationReport { check: self.check(task) }),
                TaskKind::Review | TaskKind::Assess | TaskKind::Critique | TaskKind::Confirm => {
                    ResponseBody::Verdict(self.verdict(agent, task)?)
                }
            }
        };
        let transcript = serde_json::to_string(&body).expect("bodies serialize");
        Ok(BackendReply { body, transcript })
    }
}

impl ScriptedOracle for World {
    fn judge(&self, candidate_id: &str, query: &OracleQuery) -> Option<ValidationStatus> {
        let c = self.spec.candidate(candidate_id)?;
        let draw = Draw { world: self, c };
        let v = &self.spec.validation;
        let (attempt, round) = (query.attempt.to_string(), query.round.to_string());
        let where_ = if query.remote { "remote" } else { "local" };
        let p_inf = if query.remote {
            v.remote_infeasible_probability
        } else {
            c.infeasible_probability.unwrap_or(v.infeasible_probability)
        };
        if draw.bern(&["infeasible", where_, &attempt, &round], p_inf) {
            return Some(ValidationStatus::Infeasible);
        }
        let flip = draw.bern(&["validator", where_, &attempt, &round], v.validator_error);
        Some(if c.is_true() != flip {
            ValidationStatus::Confirmed
        } else {
            ValidationStatus::Refuted
        })
    }
}

impl TargetProbe for World {
    fn tags(&self) -> Vec<String> {
        self.spec.target.tags.clone()
    }

    fn head(&self) -> Option<String> {
        self.spec.target.head.clone()
    }

    fn hotspots(&self, limit: usize) -> Vec<Hotspot> {
        crate::engine::prepare::rank(self.spec.target.hotspots.iter().cloned(), limit)
    }
}
