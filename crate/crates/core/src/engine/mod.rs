//! Campaign orchestration: Prepare, generation waves, Stages A to D.
//!
//! Candidates are processed one at a time in queue order; the tracks of a
//! stage are dispatched concurrently. Ids, ledger order and event order are
//! assigned in roster order after the dispatches return, so a scripted
//! campaign with a fixed seed always writes the same logs.

pub mod config;
pub mod gates;
mod generation;
pub mod learnings;
pub mod prepare;

use std::sync::{Arc, Mutex};
use std::time::Duration;

use rayon::prelude::*;
use thiserror::Error;

use crate::agent::task;
use crate::agent::{
    handle_refusal, AgentResponse, AgentSpec, Gateway, GatewayError, ResponseBody, Role, Routing, TaskKind,
    TaskSpec, Tier, Verdict,
};
use crate::candidate::{EventKind, GateOutcome, LifecycleState, Stage, TargetRef};
use crate::context::{derive_view, ContextView, PreparedTarget, ViewKind};
use crate::rules::{self, RuleError};
use crate::state::{
    CampaignMeta, CampaignState, Escalation, NotificationKind, RefusalRecord, ValidationRecord, VerdictRecord,
};
use crate::store::{Store, StoreError};
use crate::util::{Clock, SystemClock};
use crate::validation::sandbox::{ContainerProvisioner, NoopProvisioner, Provisioner};
use crate::validation::{
    ContaminationCheck, OracleQuery, ScriptedOracle, ValidationError, ValidationResult, ValidationStatus, Validator,
};

pub use config::{CampaignConfig, ConfigError, PipelineConfig, ProvisionerKind, TargetConfig, ValidationConfig};
use gates::{DecisionRecord, GateError, GateVerdict, Track, ValidationInput};
use prepare::{pin_release, GitProbe, StaticProbe, TargetProbe};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Rules(#[from] RuleError),
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
}

impl EngineError {
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::Config(e) => e.code(),
            EngineError::Store(e) => e.code(),
            EngineError::Rules(e) => e.code(),
            EngineError::Io { .. } => "Io",
        }
    }
}

/// One roster position.
#[derive(Debug, Clone)]
struct Slot {
    name: String,
    spec: AgentSpec,
    view: ViewKind,
    task: TaskKind,
}

struct Job {
    slot: Slot,
    view: ContextView,
    task: TaskSpec,
    transcript_ref: String,
}

#[derive(Debug, Clone, Copy)]
struct Ctx {
    attempt: u32,
    round: u32,
    window: u32,
}

enum Settled {
    Done(Job, AgentResponse),
    Parked,
    Failed(Job, GatewayError),
}

enum StageEnd {
    Decided,
    Parked,
    Deferred,
}

/// Where a candidate stopped when the engine let go of it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Completed,
    Parked,
    Deferred,
}

pub struct Engine {
    pub config: CampaignConfig,
    gateway: Gateway,
    clock: Arc<dyn Clock>,
    probe: Arc<dyn TargetProbe>,
    provisioner: Arc<dyn Provisioner>,
    oracle: Option<Arc<dyn ScriptedOracle>>,
    pool: Option<rayon::ThreadPool>,
    store: Option<Mutex<Store>>,
    scripted_runtime_seconds: f64,
}

impl Engine {
    pub fn new(config: CampaignConfig, mut gateway: Gateway) -> Self {
        gateway.timeout = Duration::from_secs(config.pipeline.timeout_seconds);
        let probe: Arc<dyn TargetProbe> = match &config.target.local_path {
            Some(path) => Arc::new(GitProbe { path: path.clone() }),
            None => Arc::new(StaticProbe {
                hotspots: config.hotspots.clone(),
                ..StaticProbe::default()
            }),
        };
        let provisioner: Arc<dyn Provisioner> = match config.validation.provisioner {
            ProvisionerKind::Noop => Arc::new(NoopProvisioner),
            ProvisionerKind::Container => Arc::new(ContainerProvisioner {
                runtime: config.validation.container_runtime.clone(),
            }),
        };
        let pool = (config.pipeline.parallelism > 1)
            .then(|| {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(config.pipeline.parallelism)
                    .build()
                    .ok()
            })
            .flatten();
        Self {
            config,
            gateway,
            clock: Arc::new(SystemClock),
            probe,
            provisioner,
            oracle: None,
            pool,
            store: None,
            scripted_runtime_seconds: 0.5,
        }
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_probe(mut self, probe: Arc<dyn TargetProbe>) -> Self {
        self.probe = probe;
        self
    }

    pub fn with_provisioner(mut self, provisioner: Arc<dyn Provisioner>) -> Self {
        self.provisioner = provisioner;
        self
    }

    pub fn with_oracle(mut self, oracle: Arc<dyn ScriptedOracle>) -> Self {
        self.oracle = Some(oracle);
        self
    }

    pub fn with_store(mut self, store: Store) -> Self {
        self.store = Some(Mutex::new(store));
        self
    }

    pub fn with_scripted_runtime(mut self, seconds: f64) -> Self {
        self.scripted_runtime_seconds = seconds;
        self
    }

    /// Dispatch tracks on the calling thread. Used by Monte Carlo trials,
    /// which already run one campaign per worker.
    pub fn sequential(mut self) -> Self {
        self.pool = None;
        self
    }

    fn now(&self) -> u64 {
        self.clock.now()
    }

    fn sync(&self, state: &CampaignState) -> Result<(), EngineError> {
        if let Some(store) = &self.store {
            store.lock().expect("store lock").sync(state)?;
        }
        Ok(())
    }

    pub fn new_state(&self) -> CampaignState {
        CampaignState::new(CampaignMeta::new(
            self.config.campaign_id.clone(),
            self.config.seed,
            self.config.pipeline.view_policy.clone(),
        ))
    }

    /// Run (or resume) a campaign until every queued candidate has left the
    /// pipeline and the wave budget is spent.
    pub fn run_campaign(&self, resume: Option<CampaignState>) -> Result<CampaignState, EngineError> {
        self.config.validate()?;
        let mut state = resume.unwrap_or_else(|| self.new_state());
        state.meta.finished = false;
        if !state.meta.prepared {
            self.import_rules(&mut state)?;
            let prepared = self.run_prepare(&mut state);
            state.prepared = Some(prepared);
            state.meta.prepared = true;
            state.meta.target_tags = self.config.target.domain_tags.clone();
            self.sync(&state)?;
        }
        if state.meta.wave == 0 {
            self.start_wave(&mut state);
            self.sync(&state)?;
        }
        let max_waves = self.config.pipeline.max_waves;
        loop {
            if let Some(cid) = state.meta.queue.pop_front() {
                if self.process(&mut state, &cid) == Flow::Completed {
                    state.meta.completions_since_reseed += 1;
                }
                if state.meta.completions_since_reseed >= self.config.pipeline.reseed_cadence
                    && state.meta.wave < max_waves
                {
                    self.start_wave(&mut state);
                }
                self.sync(&state)?;
                continue;
            }
            if state.meta.wave < max_waves {
                self.start_wave(&mut state);
                self.sync(&state)?;
                continue;
            }
            if !state.meta.deferred.is_empty() {
                // No further window is coming; retry remotely in this one.
                let deferred = std::mem::take(&mut state.meta.deferred);
                state.meta.queue.extend(deferred);
                continue;
            }
            break;
        }
        state.meta.finished = true;
        self.sync(&state)?;
        Ok(state)
    }

    fn import_rules(&self, state: &mut CampaignState) -> Result<(), EngineError> {
        if let Some(path) = &self.config.rules_file {
            let text = std::fs::read_to_string(path).map_err(|e| EngineError::Io {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?;
            let rules = rules::import_rules(&text)?;
            state
                .rules
                .extend(rules::select_transfer(&rules, &self.config.target.domain_tags));
        }
        Ok(())
    }

    fn agent(&self, family: &str, tier: Tier, role: Role, slot: &str) -> AgentSpec {
        AgentSpec {
            agent_id: format!("{family}/{slot}"),
            backend: self.config.backend,
            model_family: family.to_string(),
            tier,
            role,
        }
    }

    fn slot(&self, name: &str, family: &str, tier: Tier, role: Role, view: ViewKind, task: TaskKind) -> Slot {
        Slot {
            name: name.to_string(),
            spec: self.agent(family, tier, role, name),
            view,
            task,
        }
    }

    fn roster(&self, stage: Stage) -> Vec<Slot> {
        use ViewKind::*;
        let p = &self.config.pipeline;
        let fam = p.default_family.as_str();
        let (w, s) = (Tier::Workhorse, Tier::Senior);
        match stage {
            Stage::A => vec![
                self.slot("a.creative", fam, w, Role::Creative, FullSynthesis, TaskKind::Review),
                self.slot("a.adversary.1", fam, w, Role::Adversarial, ClaimOnly, TaskKind::Review),
                self.slot("a.adversary.2", fam, w, Role::Adversarial, ClaimOnly, TaskKind::Review),
            ],
            Stage::B => {
                let mut v = vec![
                    self.slot("b.creative.full", fam, w, Role::Creative, FullSynthesis, TaskKind::Review),
                    self.slot("b.creative.cold", fam, w, Role::Creative, ColdStart, TaskKind::Review),
                    self.slot("b.adversary.full", fam, w, Role::Adversarial, FullSynthesis, TaskKind::Review),
                    self.slot("b.adversary.naive", fam, w, Role::Adversarial, ClaimOnly, TaskKind::Review),
                    self.slot("b.adversary.senior", fam, s, Role::Adversarial, SelectiveSummary, TaskKind::Review),
                ];
                let arb_fam = p.arbiter_family.as_deref().unwrap_or(fam);
                for i in 1..=p.arbiter_panel {
                    v.push(self.slot(
                        &format!("b.arbiter.{i}"),
                        arb_fam,
                        w,
                        Role::Arbiter,
                        FullSynthesis,
                        TaskKind::Review,
                    ));
                }
                v
            }
            Stage::C => (1..=p.assessors)
                .map(|i| {
                    let view = if i % 2 == 1 { ClaimOnly } else { SelectiveSummary };
                    self.slot(&format!("c.assessor.{i}"), fam, w, Role::Adversarial, view, TaskKind::Assess)
                })
                .collect(),
            Stage::D => p
                .critic_families
                .iter()
                .map(|f| self.slot(&format!("d.critic.{f}"), f, w, Role::Critic, MinimalSummary, TaskKind::Critique))
                .collect(),
        }
    }

    fn target_ref(state: &CampaignState) -> TargetRef {
        state
            .prepared
            .as_ref()
            .map(|p| p.target_ref.clone())
            .expect("campaign prepared before dispatch")
    }

    /// Derive the view, record the exposure and the dispatch, assemble the task.
    fn prepare_job(
        &self,
        state: &mut CampaignState,
        cid: &str,
        stage: Option<Stage>,
        slot: Slot,
        ctx: Ctx,
        remote: bool,
    ) -> Job {
        let now = self.now();
        let view = derive_view(cid, slot.view, state).expect("queued candidates exist");
        let exposure = state.record_exposure(&slot.spec.agent_id, &view, stage, slot.spec.role, now);
        if let Some(stage) = stage {
            let dispatched = EventKind::Dispatched {
                stage,
                agent_id: slot.spec.agent_id.clone(),
                window: ctx.window,
            };
            state
                .append_event(cid, dispatched, format!("x{:06}", exposure.seq), now)
                .expect("dispatch follows the candidate's active stage");
        }
        state.meta.dispatches.review += 1;
        let assembly = task::assemble(
            slot.spec.role,
            slot.task,
            stage,
            &Self::target_ref(state),
            &state.rules,
            Some(&view),
        );
        let task = TaskSpec {
            kind: slot.task,
            stage,
            role: slot.spec.role,
            candidate_id: Some(cid.to_string()),
            slot: slot.name.clone(),
            round: ctx.round,
            attempt: ctx.attempt,
            remote,
            text: assembly.text(),
            assertions: assembly.assertions,
            hunt: None,
            scope: None,
        };
        Job {
            slot,
            view,
            task,
            transcript_ref: format!("{cid}/x{:06}", exposure.seq),
        }
    }

    fn dispatch_one(&self, job: &Job) -> Result<(AgentResponse, String), GatewayError> {
        self.gateway
            .dispatch(&job.slot.spec, &job.task, Some(&job.view), job.transcript_ref.clone())
    }

    fn run_jobs(&self, jobs: &[Job]) -> Vec<Result<(AgentResponse, String), GatewayError>> {
        match &self.pool {
            Some(pool) if jobs.len() > 1 => pool.install(|| jobs.par_iter().map(|j| self.dispatch_one(j)).collect()),
            _ => jobs.iter().map(|j| self.dispatch_one(j)).collect(),
        }
    }

    /// Follow a dispatch through refusal routing until it yields an answer,
    /// a backend failure, or a human escalation.
    fn settle(
        &self,
        state: &mut CampaignState,
        cid: &str,
        mut job: Job,
        mut result: Result<(AgentResponse, String), GatewayError>,
        ctx: Ctx,
    ) -> Settled {
        loop {
            let (response, transcript) = match result {
                Ok(r) => r,
                Err(e) => return Settled::Failed(job, e),
            };
            state.transcripts.insert(job.transcript_ref.clone(), transcript);
            let Some(routing) = handle_refusal(&response, &job.slot.spec) else {
                return Settled::Done(job, response);
            };
            let ResponseBody::Refusal { refusal_reason } = &response.body else {
                unreachable!("routing only for refusals")
            };
            let now = self.now();
            let stage = job.task.stage;
            let refusal_id = state.next_id("r");
            let senior = job.slot.spec.senior();
            state.refusals.push(RefusalRecord {
                refusal_id: refusal_id.clone(),
                candidate_id: Some(cid.to_string()),
                stage,
                agent_id: job.slot.spec.agent_id.clone(),
                tier: job.slot.spec.tier,
                task_kind: job.task.kind,
                reason: refusal_reason.clone(),
                routing,
                reassigned_to: (routing == Routing::ReassignSenior).then(|| senior.agent_id.clone()),
                timestamp: now,
            });
            if stage.is_some() {
                let event = EventKind::RefusalRecorded {
                    stage,
                    agent_id: job.slot.spec.agent_id.clone(),
                    routing,
                };
                state
                    .append_event(cid, event, refusal_id.clone(), now)
                    .expect("refusal events are legal in any state");
            }
            if routing == Routing::EscalateHuman {
                state.escalations.push(Escalation {
                    candidate_id: Some(cid.to_string()),
                    stage,
                    agent_id: job.slot.spec.agent_id.clone(),
                    task_kind: job.task.kind,
                    reason: refusal_reason.clone(),
                    timestamp: now,
                });
                state.notify(
                    NotificationKind::RefusalEscalated,
                    Some(cid),
                    format!("{} refused {}: {refusal_reason}", job.slot.spec.agent_id, job.task.kind.as_str()),
                    now,
                );
                return Settled::Parked;
            }
            let slot = Slot {
                spec: senior,
                ..job.slot.clone()
            };
            job = self.prepare_job(state, cid, stage, slot, ctx, job.task.remote);
            result = self.dispatch_one(&job);
        }
    }

    fn record_verdict(
        &self,
        state: &mut CampaignState,
        cid: &str,
        job: &Job,
        verdict: Verdict,
        ctx: Ctx,
    ) -> String {
        let now = self.now();
        let flags = rules::evaluate(&job.task.assertions, &ResponseBody::Verdict(verdict.clone()));
        let id = state.next_id("v");
        if let Some(stage) = job.task.stage {
            state
                .append_event(cid, EventKind::VerdictRecorded { stage }, id.clone(), now)
                .expect("verdicts follow a dispatch at the same stage");
        }
        if !flags.is_empty() {
            state.notify(
                NotificationKind::ComplianceViolation,
                Some(cid),
                format!("{id} violates {}", flags.join(", ")),
                now,
            );
        }
        state.push_verdict(VerdictRecord {
            verdict_id: id.clone(),
            candidate_id: cid.to_string(),
            stage: job.task.stage,
            attempt: ctx.attempt,
            round: ctx.round,
            window: ctx.window,
            slot: job.slot.name.clone(),
            view_kind: Some(job.view.kind),
            model_family: job.slot.spec.model_family.clone(),
            tier: job.slot.spec.tier,
            verdict,
            compliance_flags: flags,
            timestamp: now,
        });
        id
    }

    /// Dispatch a verdict roster and record the answers in roster order.
    fn collect_tracks(
        &self,
        state: &mut CampaignState,
        cid: &str,
        stage: Option<Stage>,
        roster: Vec<Slot>,
        ctx: Ctx,
    ) -> Option<Vec<Track>> {
        let jobs: Vec<Job> = roster
            .into_iter()
            .map(|slot| self.prepare_job(state, cid, stage, slot, ctx, false))
            .collect();
        let results = self.run_jobs(&jobs);
        let mut tracks = Vec::with_capacity(jobs.len());
        for (job, result) in jobs.into_iter().zip(results) {
            let (job, response) = match self.settle(state, cid, job, result, ctx) {
                Settled::Done(job, response) => (job, response),
                Settled::Parked => return None,
                Settled::Failed(job, e) => {
                    // Verdict tasks never fail at the gateway; keep the slot as an abstain.
                    let response = AgentResponse {
                        agent_id: job.slot.spec.agent_id.clone(),
                        body: ResponseBody::Verdict(Verdict::abstain(&job.slot.spec, e.to_string())),
                        raw_transcript_ref: job.transcript_ref.clone(),
                    };
                    (job, response)
                }
            };
            let ResponseBody::Verdict(verdict) = response.body else {
                unreachable!("gateway checks the body kind against the task")
            };
            let verdict_id = self.record_verdict(state, cid, &job, verdict.clone(), ctx);
            tracks.push(Track {
                verdict_id,
                view: job.view.kind,
                model_family: job.slot.spec.model_family.clone(),
                verdict,
            });
        }
        Some(tracks)
    }

    fn ctx(state: &CampaignState, cid: &str) -> Ctx {
        let attempt = state.candidates[cid].attempt();
        let round = state
            .decisions_for(cid)
            .filter(|d| d.attempt == attempt && d.outcome == GateOutcome::PartialKillReentry)
            .count() as u32;
        Ctx {
            attempt,
            round,
            window: state.meta.wave,
        }
    }

    /// Drive one candidate until it leaves the pipeline or has to wait.
    pub fn process(&self, state: &mut CampaignState, cid: &str) -> Flow {
        loop {
            let stage = match &state.candidates[cid].state {
                LifecycleState::Generated => Stage::A,
                LifecycleState::InStage { stage } => *stage,
                LifecycleState::Reentry { target_stage } => *target_stage,
                LifecycleState::DisclosureReady | LifecycleState::Killed { .. } => return Flow::Completed,
            };
            let ctx = Self::ctx(state, cid);
            let end = match stage {
                Stage::C => self.stage_c(state, cid, ctx),
                _ => self.review_stage(state, cid, stage, ctx),
            };
            match end {
                StageEnd::Decided => {}
                StageEnd::Parked => {
                    state.meta.parked.push(cid.to_string());
                    return Flow::Parked;
                }
                StageEnd::Deferred => {
                    state.meta.deferred.push(cid.to_string());
                    return Flow::Deferred;
                }
            }
        }
    }

    fn review_stage(&self, state: &mut CampaignState, cid: &str, stage: Stage, ctx: Ctx) -> StageEnd {
        let Some(tracks) = self.collect_tracks(state, cid, Some(stage), self.roster(stage), ctx) else {
            return StageEnd::Parked;
        };
        let by_role = |role: Role| tracks.iter().filter(|t| t.verdict.role == role).cloned().collect::<Vec<_>>();
        let p = &self.config.pipeline;
        let gate = match stage {
            Stage::A => gates::decide_stage_a(&by_role(Role::Creative), &by_role(Role::Adversarial)),
            Stage::B => gates::decide_stage_b(
                &by_role(Role::Creative),
                &by_role(Role::Adversarial),
                &by_role(Role::Arbiter),
            ),
            Stage::D => gates::decide_stage_d(&tracks, &p.default_family, ctx.round, p.max_reentries),
            Stage::C => unreachable!("stage C has its own driver"),
        };
        let refs = tracks.iter().map(|t| t.verdict_id.clone()).collect();
        let end = self.record_decision(state, cid, stage, gate, refs, ctx, None);
        if matches!(end, StageEnd::Decided) {
            self.resurrection_hook(state, cid, ctx);
        }
        end
    }

    fn record_decision(
        &self,
        state: &mut CampaignState,
        cid: &str,
        stage: Stage,
        gate: Result<GateVerdict, GateError>,
        verdict_refs: Vec<String>,
        ctx: Ctx,
        validation: Option<(String, ValidationStatus)>,
    ) -> StageEnd {
        let now = self.now();
        let g = match gate {
            Ok(g) => g,
            Err(e) => {
                state.notify(NotificationKind::HumanReview, Some(cid), format!("gate error: {e}"), now);
                return StageEnd::Parked;
            }
        };
        let decision_id = state.next_id("d");
        let outcome = g.outcome();
        let record = DecisionRecord {
            decision_id: decision_id.clone(),
            candidate_id: cid.to_string(),
            stage,
            outcome,
            verdict_refs: verdict_refs.clone(),
            cold_start_divergence: g.cold_start_divergence,
            unanimity_warning: g.unanimity_warning,
            human_review: g.human_review,
            reasons: g.reasons.clone(),
            deciding_verdict: g.deciding_verdict.clone(),
            reentry_target: g.reentry_target,
            reentry_limit_hit: g.reentry_limit_hit,
            recalibration: g.recalibration.clone(),
            validation_ref: validation.as_ref().map(|(id, _)| id.clone()),
            max_reentries: (stage == Stage::D).then_some(self.config.pipeline.max_reentries),
            window: ctx.window,
            attempt: ctx.attempt,
            round: ctx.round,
            timestamp: now,
        };
        let event = match &validation {
            Some((_, status)) => EventKind::Validated {
                status: *status,
                unanimity_warning: g.unanimity_warning,
            },
            None => EventKind::GateDecided {
                stage,
                outcome,
                verdict_refs,
                unanimity_warning: g.unanimity_warning,
                reentry_target: g.reentry_target,
            },
        };
        if let Err(e) = state.append_event(cid, event, decision_id.clone(), now) {
            state.notify(NotificationKind::HumanReview, Some(cid), format!("rejected decision: {e}"), now);
            return StageEnd::Parked;
        }
        state.decisions.push(record);
        state.notify(
            NotificationKind::GateDecided,
            Some(cid),
            format!("{decision_id} stage {stage}: {}", outcome_label(outcome)),
            now,
        );
        if g.unanimity_warning {
            state.notify(NotificationKind::UnanimityWarning, Some(cid), format!("{decision_id} stage {stage}"), now);
        }
        if g.cold_start_divergence {
            state.notify(NotificationKind::ColdStartDivergence, Some(cid), format!("{decision_id} stage {stage}"), now);
        }
        if g.reentry_limit_hit {
            state.notify(NotificationKind::ReentryLimit, Some(cid), format!("{decision_id} after {} rounds", ctx.round), now);
        }
        if g.human_review {
            state.notify(NotificationKind::HumanReview, Some(cid), format!("{decision_id}: {}", g.reasons.join("; ")), now);
        }
        StageEnd::Decided
    }

    /// After a unanimous kill, one cold-start creative takes a confirm-mandate
    /// look. It only raises a notification; the kill stands until a human acts.
    fn resurrection_hook(&self, state: &mut CampaignState, cid: &str, ctx: Ctx) {
        if !self.config.pipeline.resurrection_agent {
            return;
        }
        let Some(last) = state.decisions_for(cid).last() else {
            return;
        };
        if !(last.outcome == GateOutcome::Kill && last.unanimity_warning) {
            return;
        }
        let decision_id = last.decision_id.clone();
        let slot = self.slot(
            "resurrection",
            &self.config.pipeline.default_family,
            Tier::Senior,
            Role::Creative,
            ViewKind::ColdStart,
            TaskKind::Confirm,
        );
        let Some(tracks) = self.collect_tracks(state, cid, None, vec![slot], ctx) else {
            return;
        };
        if tracks.iter().any(|t| t.verdict.has_plausible_exploitation()) {
            let now = self.now();
            state.notify(
                NotificationKind::ResurrectionSuggested,
                Some(cid),
                format!("{} argues {decision_id} killed a real defect", tracks[0].verdict_id),
                now,
            );
        }
    }

    fn stage_c(&self, state: &mut CampaignState, cid: &str, ctx: Ctx) -> StageEnd {
        let p = &self.config.pipeline;
        let remote = state.validations.iter().any(|v| {
            v.candidate_id == cid && v.attempt == ctx.attempt && v.round == ctx.round && v.deferred
        });
        let now = self.now();
        let (result, check, note, contamination_note) = if !p.empirical_gate {
            let result = ValidationResult {
                status: ValidationStatus::Infeasible,
                transcript_ref: String::new(),
                contamination_check: ContaminationCheck::Pass,
                runtime_seconds: 0.0,
            };
            (result, None, Some("empirical gate disabled".to_string()), None)
        } else {
            match self.run_validator(state, cid, ctx, remote) {
                None => return StageEnd::Parked,
                Some(v) => v,
            }
        };
        let validation_id = state.next_id("val");
        let deferred = p.remote_validation
            && p.empirical_gate
            && !remote
            && result.status == ValidationStatus::Infeasible
            && result.contamination_check == ContaminationCheck::Pass;
        let status = result.status;
        let contaminated = result.contamination_check == ContaminationCheck::Fail;
        state.validations.push(ValidationRecord {
            validation_id: validation_id.clone(),
            candidate_id: cid.to_string(),
            attempt: ctx.attempt,
            round: ctx.round,
            window: ctx.window,
            result,
            gate_disabled: !p.empirical_gate,
            deferred,
            remote,
            check,
            note,
            timestamp: now,
        });
        if let Some(reason) = contamination_note {
            state.notify(NotificationKind::Contamination, Some(cid), format!("{validation_id}: {reason}"), now);
        }
        if deferred {
            return StageEnd::Deferred;
        }

        let tracks = if status == ValidationStatus::Refuted {
            vec![]
        } else {
            match self.collect_tracks(state, cid, Some(Stage::C), self.roster(Stage::C), ctx) {
                Some(t) => t,
                None => return StageEnd::Parked,
            }
        };
        let input = ValidationInput {
            status,
            contamination: if contaminated {
                ContaminationCheck::Fail
            } else {
                ContaminationCheck::Pass
            },
            gate_disabled: !p.empirical_gate,
        };
        let claimed = state.candidates[cid].claim.claimed_severity.clone();
        let gate = gates::decide_stage_c(Some(&input), claimed.as_ref(), &tracks);
        let refs = tracks.iter().map(|t| t.verdict_id.clone()).collect();
        self.record_decision(state, cid, Stage::C, gate, refs, ctx, Some((validation_id, status)))
    }

    /// Dispatch the validator and execute its check. `None` means the
    /// candidate was parked on a senior refusal.
    #[allow(clippy::type_complexity)]
    fn run_validator(
        &self,
        state: &mut CampaignState,
        cid: &str,
        ctx: Ctx,
        remote: bool,
    ) -> Option<(ValidationResult, Option<crate::validation::CheckSpec>, Option<String>, Option<String>)> {
        let fam = self.config.pipeline.default_family.clone();
        let slot = self.slot("c.validator", &fam, Tier::Workhorse, Role::Validator, ViewKind::FullSynthesis, TaskKind::Validate);
        let job = self.prepare_job(state, cid, Some(Stage::C), slot, ctx, remote);
        let first = self.dispatch_one(&job);
        let infeasible = |transcript_ref: String, contamination| ValidationResult {
            status: ValidationStatus::Infeasible,
            transcript_ref,
            contamination_check: contamination,
            runtime_seconds: 0.0,
        };
        let (job, response) = match self.settle(state, cid, job, first, ctx) {
            Settled::Parked => return None,
            Settled::Failed(job, e) => {
                return Some((
                    infeasible(job.transcript_ref, ContaminationCheck::Pass),
                    None,
                    Some(format!("validator unavailable: {e}")),
                    None,
                ))
            }
            Settled::Done(job, response) => (job, response),
        };
        let ResponseBody::ValidationReport(report) = response.body else {
            unreachable!("gateway checks the body kind against the task")
        };
        let prepared = state.prepared.clone().expect("prepared");
        let validator = Validator {
            limits: self.config.validation.limits.clone(),
            provisioner: self.provisioner.as_ref(),
            oracle: self.oracle.as_deref(),
            query: OracleQuery {
                attempt: ctx.attempt,
                round: ctx.round,
                remote,
            },
            scripted_runtime_seconds: self.scripted_runtime_seconds,
        };
        let exec_ref = format!("{}.check", job.transcript_ref);
        let target = self.execution_target(&prepared);
        match validator.execute(&report.check, &target, &exec_ref) {
            Ok(execution) => {
                state.transcripts.insert(exec_ref, execution.transcript);
                Some((execution.result, Some(report.check), None, None))
            }
            Err(ValidationError::ContaminatedCheck(reason)) => Some((
                infeasible(job.transcript_ref, ContaminationCheck::Fail),
                Some(report.check),
                Some(format!("contaminated check: {reason}")),
                Some(reason),
            )),
            Err(ValidationError::InvalidCheck(reason)) => Some((
                infeasible(job.transcript_ref, ContaminationCheck::Pass),
                Some(report.check),
                Some(format!("invalid check: {reason}")),
                None,
            )),
        }
    }

    /// Probes see the local checkout when one is configured.
    fn execution_target(&self, prepared: &PreparedTarget) -> PreparedTarget {
        let mut target = prepared.clone();
        if let Some(path) = &self.config.target.local_path {
            target.target_ref.repository = path.display().to_string();
        }
        target
    }

    /// Pin the revision, compile the prior-art brief and collect hotspots.
    pub fn run_prepare(&self, state: &mut CampaignState) -> PreparedTarget {
        let now = self.now();
        let mut warnings = vec![];
        let (revision, development_head) = match pin_release(&self.probe.tags()) {
            Ok(tag) => (tag, false),
            Err(e) => {
                let head = self.probe.head().unwrap_or_else(|| "HEAD".to_string());
                let w = format!("{e}; pinned development head {head}");
                state.notify(NotificationKind::DevelopmentHead, None, w.clone(), now);
                warnings.push(w);
                (head, true)
            }
        };
        let target_ref = TargetRef {
            repository: self.config.target.repository.clone(),
            revision,
            development_head,
        };
        let fam = self.config.pipeline.default_family.clone();
        let jobs: Vec<(AgentSpec, TaskSpec)> = ["target", "siblings", "similar"]
            .iter()
            .map(|scope| {
                let name = format!("research.{scope}");
                let spec = self.agent(&fam, Tier::Workhorse, Role::Research, &name);
                let assembly = task::assemble(Role::Research, TaskKind::Research, None, &target_ref, &state.rules, None);
                let task = TaskSpec {
                    kind: TaskKind::Research,
                    stage: None,
                    role: Role::Research,
                    candidate_id: None,
                    slot: name,
                    round: 0,
                    attempt: 0,
                    remote: false,
                    text: format!("{}Scope: {scope}\n", assembly.text()),
                    assertions: vec![],
                    hunt: None,
                    scope: Some(scope.to_string()),
                };
                (spec, task)
            })
            .collect();
        let texts = self.side_dispatch(state, &jobs, "prepare");
        let briefs: Vec<String> = texts
            .into_iter()
            .filter_map(|body| match body {
                Some(ResponseBody::ResearchBrief { text }) if !text.trim().is_empty() => Some(text),
                _ => None,
            })
            .collect();
        if briefs.is_empty() {
            warnings.push("prior-art brief is empty".into());
        }
        let mut hotspot_list = self.probe.hotspots(10);
        if hotspot_list.is_empty() {
            hotspot_list = prepare::rank(self.config.hotspots.iter().cloned(), 10);
        }
        PreparedTarget {
            target_ref,
            prior_art_brief: briefs.join("\n"),
            hotspot_list,
            subsystem_partition: self.config.target.subsystems.clone(),
            warnings,
        }
    }

    /// Dispatch tasks that carry no candidate view (research, hunting).
    /// Refusals route as for reviews; failures come back as `None`.
    fn side_dispatch(&self, state: &mut CampaignState, jobs: &[(AgentSpec, TaskSpec)], prefix: &str) -> Vec<Option<ResponseBody>> {
        let call = |(spec, task): &(AgentSpec, TaskSpec), n: usize| {
            let tref = format!("{prefix}/{}-{n}", task.slot);
            (tref.clone(), self.gateway.dispatch(spec, task, None, tref))
        };
        let first: Vec<_> = match &self.pool {
            Some(pool) => pool.install(|| jobs.par_iter().map(|j| call(j, 0)).collect()),
            None => jobs.iter().map(|j| call(j, 0)).collect(),
        };
        let mut out = Vec::with_capacity(jobs.len());
        for ((spec, task), (mut tref, mut result)) in jobs.iter().zip(first) {
            let mut spec = spec.clone();
            let mut n = 0;
            let body = loop {
                self.count_side(state, task.kind);
                let (response, transcript) = match result {
                    Ok(r) => r,
                    Err(e) => {
                        let now = self.now();
                        state.notify(
                            NotificationKind::HumanReview,
                            None,
                            format!("{} {} failed: {e}", spec.agent_id, task.kind.as_str()),
                            now,
                        );
                        break None;
                    }
                };
                state.transcripts.insert(tref.clone(), transcript);
                let Some(routing) = handle_refusal(&response, &spec) else {
                    break Some(response.body);
                };
                let now = self.now();
                let reason = match &response.body {
                    ResponseBody::Refusal { refusal_reason } => refusal_reason.clone(),
                    _ => String::new(),
                };
                let refusal_id = state.next_id("r");
                let senior = spec.senior();
                state.refusals.push(RefusalRecord {
                    refusal_id,
                    candidate_id: None,
                    stage: None,
                    agent_id: spec.agent_id.clone(),
                    tier: spec.tier,
                    task_kind: task.kind,
                    reason: reason.clone(),
                    routing,
                    reassigned_to: (routing == Routing::ReassignSenior).then(|| senior.agent_id.clone()),
                    timestamp: now,
                });
                if routing == Routing::EscalateHuman {
                    state.escalations.push(Escalation {
                        candidate_id: None,
                        stage: None,
                        agent_id: spec.agent_id.clone(),
                        task_kind: task.kind,
                        reason: reason.clone(),
                        timestamp: now,
                    });
                    state.notify(
                        NotificationKind::RefusalEscalated,
                        None,
                        format!("{} refused {}: {reason}", spec.agent_id, task.kind.as_str()),
                        now,
                    );
                    break None;
                }
                spec = senior;
                n += 1;
                let (r, res) = call(&(spec.clone(), task.clone()), n);
                tref = r;
                result = res;
            };
            out.push(body);
        }
        out
    }

    fn count_side(&self, state: &mut CampaignState, kind: TaskKind) {
        match kind {
            TaskKind::Hunt => state.meta.dispatches.hunter += 1,
            _ => state.meta.dispatches.research += 1,
        }
    }
}

pub fn outcome_label(outcome: GateOutcome) -> &'static str {
    match outcome {
        GateOutcome::Promote => "promote",
        GateOutcome::Kill => "kill",
        GateOutcome::PartialKillReentry => "partial_kill_reentry",
        GateOutcome::PromoteProvisional => "promote_provisional",
    }
}
