//! Generation waves: scope-partitioned hunters, intake, re-seeding.

use crate::agent::{task, HuntBrief, Proposal, ResponseBody, Role, TaskKind, TaskSpec, Tier};
use crate::candidate::{Candidate, CandidateHeader, EventKind, Origin, SourceStratum};
use crate::engine::learnings::{reseed, Learnings};
use crate::engine::Engine;
use crate::state::{CampaignState, IntakeRecord, IntakeRejection, NotificationKind};

/// Hunter `i` of `hunters` owns every subsystem whose index is `i` modulo the
/// hunter count, so no two hunters share a scope.
pub fn partition_scopes(subsystems: &[String], hunters: usize) -> Vec<Vec<String>> {
    let mut out = vec![Vec::new(); hunters];
    for (j, s) in subsystems.iter().enumerate() {
        out[j % hunters].push(s.clone());
    }
    out
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        && !id.starts_with('.')
}

impl Engine {
    /// Open the next window: re-seed from completed candidates, run the
    /// hunters, and put deferred validations at the front of the queue.
    pub(super) fn start_wave(&self, state: &mut CampaignState) {
        let wave = state.meta.wave + 1;
        let learnings = if wave > 1 {
            reseed(state, wave - 1).ok()
        } else {
            None
        };
        if let Some(l) = &learnings {
            state.meta.learnings.push(l.clone());
        }
        state.meta.wave = wave;
        state.meta.completions_since_reseed = 0;
        let ids = self.run_generation_wave(state, wave, learnings.as_ref());
        let deferred = std::mem::take(&mut state.meta.deferred);
        for cid in deferred.into_iter().rev() {
            state.meta.queue.push_front(cid);
        }
        state.meta.queue.extend(ids);
    }

    /// Dispatch the hunters in parallel and admit their proposals. Returns
    /// the ids of admitted candidates in intake order.
    pub fn run_generation_wave(
        &self,
        state: &mut CampaignState,
        wave: u32,
        learnings: Option<&Learnings>,
    ) -> Vec<String> {
        let prepared = state.prepared.clone().expect("prepared before generation");
        let hunters = self.config.pipeline.hunters;
        let scopes = partition_scopes(&prepared.subsystem_partition, hunters);
        let fam = self.config.pipeline.default_family.clone();
        let jobs: Vec<_> = scopes
            .iter()
            .enumerate()
            .map(|(i, scope)| {
                let name = format!("hunter.{i}");
                let spec = self.agent(&fam, Tier::Workhorse, Role::Hunter, &name);
                let stratum = SourceStratum::ALL[i % SourceStratum::ALL.len()];
                let assembly = task::assemble(Role::Hunter, TaskKind::Hunt, None, &prepared.target_ref, &state.rules, None);
                let task = TaskSpec {
                    kind: TaskKind::Hunt,
                    stage: None,
                    role: Role::Hunter,
                    candidate_id: None,
                    slot: format!("w{wave}.{name}"),
                    round: 0,
                    attempt: 0,
                    remote: false,
                    text: format!("{}Scopes: {}\n", assembly.text(), scope.join(", ")),
                    assertions: assembly.assertions,
                    hunt: Some(HuntBrief {
                        wave,
                        scopes: scope.clone(),
                        source_stratum: stratum,
                        prior_art_brief: prepared.prior_art_brief.clone(),
                        learnings: learnings.cloned(),
                    }),
                    scope: None,
                };
                (spec, task)
            })
            .collect();
        let bodies = self.side_dispatch(state, &jobs, &format!("wave{wave}"));
        let mut admitted = vec![];
        for (((spec, _), body), scope) in jobs.iter().zip(bodies).zip(&scopes) {
            let Some(ResponseBody::CandidateBatch { candidates }) = body else {
                continue;
            };
            for proposal in candidates {
                match self.intake(state, wave, &spec.agent_id, scope, proposal) {
                    Ok(id) => admitted.push(id),
                    Err(rejection) => state.intake_rejections.push(rejection),
                }
            }
        }
        let now = self.now();
        state.notify(
            NotificationKind::WaveGenerated,
            None,
            format!("wave {wave}: {} admitted", admitted.len()),
            now,
        );
        admitted
    }

    fn intake(
        &self,
        state: &mut CampaignState,
        wave: u32,
        hunter_id: &str,
        scope: &[String],
        proposal: Proposal,
    ) -> Result<String, IntakeRejection> {
        let reject = |reason: String| IntakeRejection {
            wave,
            hunter_id: hunter_id.to_string(),
            title: proposal.claim.title.clone(),
            reason,
        };
        if let Err(e) = proposal.claim.validate() {
            return Err(reject(e.to_string()));
        }
        let critique = proposal.self_critique.clone().unwrap_or_default();
        if critique.trim().is_empty() {
            return Err(reject("MissingSelfCritique".into()));
        }
        if !scope.contains(&proposal.scope_stratum) {
            return Err(reject(format!("scope {} outside the hunter's partition", proposal.scope_stratum)));
        }
        let id = match proposal.proposed_id.as_deref() {
            Some(p) if valid_id(p) && !state.candidates.contains_key(p) => p.to_string(),
            _ => {
                let mut n = state.order.len() + 1;
                loop {
                    let id = format!("c{wave}-{n:03}");
                    if !state.candidates.contains_key(&id) {
                        break id;
                    }
                    n += 1;
                }
            }
        };
        let now = self.now();
        let header = CandidateHeader {
            id: id.clone(),
            target_ref: state.prepared.as_ref().expect("prepared").target_ref.clone(),
            claim: proposal.claim.clone(),
            origin: Origin {
                hunter_id: hunter_id.to_string(),
                wave,
                source_stratum: proposal.source_stratum,
                scope_stratum: proposal.scope_stratum.clone(),
            },
        };
        let mut candidate = Candidate::generate(header, now, format!("intake/{id}")).map_err(|e| reject(e.to_string()))?;
        if wave > 1 {
            let event = crate::candidate::Event {
                seq: candidate.next_seq(),
                timestamp: now,
                kind: EventKind::Reseeded { wave },
                payload_ref: format!("learnings/{}", wave - 1),
            };
            candidate.apply(event).map_err(|e| reject(e.to_string()))?;
        }
        state.add_candidate(
            candidate,
            IntakeRecord {
                candidate_id: id.clone(),
                hunter_id: hunter_id.to_string(),
                self_critique: critique,
            },
        );
        Ok(id)
    }
}
