//! Exact outcome distributions by exhaustive enumeration.
//!
//! Shares no code with the engine's gates: the decision tables below are
//! written out again from the protocol so the two can be compared.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::PipelineConfig;
use crate::sim::world::{CandidateSpec, WorldSpec};

pub const MAX_CANDIDATES: usize = 6;
/// Largest number of stochastic agents (0 < ε < 1) in any one stage roster.
pub const MAX_AGENTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    IntakeRejected,
    NotGenerated,
    KilledA,
    KilledB,
    KilledC,
    KilledD,
    DisclosureConfirmed,
    DisclosureProvisional,
    InFlight,
}

impl Outcome {
    pub const ALL: [Outcome; 9] = [
        Outcome::IntakeRejected,
        Outcome::NotGenerated,
        Outcome::KilledA,
        Outcome::KilledB,
        Outcome::KilledC,
        Outcome::KilledD,
        Outcome::DisclosureConfirmed,
        Outcome::DisclosureProvisional,
        Outcome::InFlight,
    ];

    pub fn is_disclosure(self) -> bool {
        matches!(self, Outcome::DisclosureConfirmed | Outcome::DisclosureProvisional)
    }

    pub fn is_kill(self) -> bool {
        matches!(self, Outcome::KilledA | Outcome::KilledB | Outcome::KilledC | Outcome::KilledD)
    }
}

pub type Dist = BTreeMap<Outcome, f64>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub per_candidate: BTreeMap<String, Dist>,
}

impl OracleResult {
    pub fn probability(&self, cid: &str, outcome: Outcome) -> f64 {
        self.per_candidate
            .get(cid)
            .and_then(|d| d.get(&outcome))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn disclosure(&self, cid: &str) -> f64 {
        Outcome::ALL
            .iter()
            .filter(|o| o.is_disclosure())
            .map(|o| self.probability(cid, *o))
            .sum()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("world too large to enumerate: {candidates} candidates, {agents} stochastic agents in one stage (limits {MAX_CANDIDATES} and {MAX_AGENTS})")]
    TooLargeToEnumerate { candidates: usize, agents: usize },
    #[error("world not supported by the oracle: {0}")]
    UnsupportedWorld(String),
}

impl OracleError {
    pub fn code(&self) -> &'static str {
        match self {
            OracleError::TooLargeToEnumerate { .. } => "TooLargeToEnumerate",
            OracleError::UnsupportedWorld(_) => "UnsupportedWorld",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Creative,
    Adversary,
    Critic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Say {
    Yes,
    No,
    Partial,
}

struct Seat<'a> {
    family: &'a str,
    kind: Kind,
}

/// Per-family latent state for correlated candidates: `Some(shared)` when
/// the family is coupled.
type Latent<'a> = BTreeMap<&'a str, Option<bool>>;

struct Enumerator<'a> {
    spec: &'a WorldSpec,
    p: &'a PipelineConfig,
    arbiter_family: &'a str,
}

impl<'a> Enumerator<'a> {
    fn eps(&self, family: &str) -> f64 {
        self.spec.agent_model.epsilon_for(family)
    }

    fn seats(&self, stage: char) -> Vec<Seat<'a>> {
        let fam = self.p.default_family.as_str();
        let seat = |family, kind| Seat { family, kind };
        match stage {
            'A' => vec![seat(fam, Kind::Creative), seat(fam, Kind::Adversary), seat(fam, Kind::Adversary)],
            'B' => {
                let mut v = vec![
                    seat(fam, Kind::Creative),
                    seat(fam, Kind::Creative),
                    seat(fam, Kind::Adversary),
                    seat(fam, Kind::Adversary),
                    seat(fam, Kind::Adversary),
                ];
                v.extend((0..self.p.arbiter_panel).map(|_| seat(self.arbiter_family, Kind::Adversary)));
                v
            }
            _ => self.p.critic_families.iter().map(|f| seat(f.as_str(), Kind::Critic)).collect(),
        }
    }

    fn stochastic(&self, seats: &[Seat]) -> usize {
        seats
            .iter()
            .filter(|s| {
                let e = self.eps(s.family);
                e > 0.0 && e < 1.0
            })
            .count()
    }

    /// What a seat says about the candidate, given whether it errs.
    fn say(c: &CandidateSpec, kind: Kind, wrong: bool, round: u32) -> Say {
        if c.requires_uplift {
            return Say::No;
        }
        let honest = if c.is_true() { Say::Yes } else { Say::No };
        if wrong {
            return if honest == Say::Yes { Say::No } else { Say::Yes };
        }
        if kind == Kind::Critic && honest == Say::Yes && round == 0 && c.refutable_subclaim.is_some() {
            return Say::Partial;
        }
        honest
    }

    /// Every joint assignment of the seats' answers with its probability.
    fn answers(&self, c: &CandidateSpec, seats: &[Seat], latent: &Latent, round: u32) -> Vec<(Vec<(Kind, Say)>, f64)> {
        let mut out = vec![(Vec::with_capacity(seats.len()), 1.0)];
        for s in seats {
            let branches: Vec<(bool, f64)> = match latent.get(s.family).copied().flatten() {
                Some(shared) => vec![(shared, 1.0)],
                None => {
                    let e = self.eps(s.family);
                    vec![(true, e), (false, 1.0 - e)]
                }
            };
            let mut next = Vec::with_capacity(out.len() * 2);
            for (prefix, p) in &out {
                for (wrong, q) in &branches {
                    if *q == 0.0 {
                        continue;
                    }
                    let mut v = prefix.clone();
                    v.push((s.kind, Self::say(c, s.kind, *wrong, round)));
                    next.push((v, p * q));
                }
            }
            out = next;
        }
        out
    }

    /// Stage-C status probabilities: (confirmed, refuted, infeasible).
    fn validation(&self, c: &CandidateSpec) -> (f64, f64, f64) {
        if !self.p.empirical_gate || c.contaminated_check {
            return (0.0, 0.0, 1.0);
        }
        let v = &self.spec.validation;
        let feasible = |p_inf: f64| {
            let right = (1.0 - p_inf) * (1.0 - v.validator_error);
            let wrong = (1.0 - p_inf) * v.validator_error;
            if c.is_true() {
                (right, wrong, p_inf)
            } else {
                (wrong, right, p_inf)
            }
        };
        let (conf, refu, inf) = feasible(c.infeasible_probability.unwrap_or(v.infeasible_probability));
        if !self.p.remote_validation {
            return (conf, refu, inf);
        }
        let (rc, rr, ri) = feasible(v.remote_infeasible_probability);
        (conf + inf * rc, refu + inf * rr, inf * ri)
    }

    fn add(into: &mut Dist, from: Dist, w: f64) {
        for (k, v) in from {
            *into.entry(k).or_default() += v * w;
        }
    }

    fn walk(&self, c: &CandidateSpec, latent: &Latent, stage: char, round: u32, provisional: bool) -> Dist {
        let mut dist = Dist::new();
        match stage {
            'A' | 'B' => {
                let killed = if stage == 'A' { Outcome::KilledA } else { Outcome::KilledB };
                let mut pass = 0.0;
                for (answers, p) in self.answers(c, &self.seats(stage), latent, round) {
                    let refuted = answers.iter().any(|(k, s)| *k == Kind::Adversary && *s == Say::No);
                    let argued = |(k, s): &(Kind, Say)| *k == Kind::Creative && *s == Say::Yes;
                    let promoted = !refuted
                        && if stage == 'A' {
                            answers.iter().filter(|a| a.0 == Kind::Creative).all(argued)
                        } else {
                            answers.iter().any(argued)
                        };
                    if promoted {
                        pass += p;
                    } else {
                        *dist.entry(killed).or_default() += p;
                    }
                }
                if pass > 0.0 {
                    let next = if stage == 'A' { 'B' } else { 'C' };
                    Self::add(&mut dist, self.walk(c, latent, next, round, provisional), pass);
                }
            }
            'C' => {
                let (conf, refu, inf) = self.validation(c);
                if refu > 0.0 {
                    *dist.entry(Outcome::KilledC).or_default() += refu;
                }
                if conf > 0.0 {
                    Self::add(&mut dist, self.walk(c, latent, 'D', round, provisional), conf);
                }
                if inf > 0.0 {
                    Self::add(&mut dist, self.walk(c, latent, 'D', round, true), inf);
                }
            }
            _ => {
                let mut reenter = 0.0;
                for (answers, p) in self.answers(c, &self.seats('D'), latent, round) {
                    if answers.iter().any(|a| a.1 == Say::No) {
                        *dist.entry(Outcome::KilledD).or_default() += p;
                    } else if answers.iter().any(|a| a.1 == Say::Partial) {
                        if round >= self.p.max_reentries {
                            *dist.entry(Outcome::KilledD).or_default() += p;
                        } else {
                            reenter += p;
                        }
                    } else if provisional {
                        *dist.entry(Outcome::DisclosureProvisional).or_default() += p;
                    } else {
                        *dist.entry(Outcome::DisclosureConfirmed).or_default() += p;
                    }
                }
                if reenter > 0.0 {
                    Self::add(&mut dist, self.walk(c, latent, 'B', round + 1, provisional), reenter);
                }
            }
        }
        dist
    }

    fn families(&self) -> Vec<&'a str> {
        let mut f = vec![self.p.default_family.as_str(), self.arbiter_family];
        f.extend(self.p.critic_families.iter().map(String::as_str));
        f.sort_unstable();
        f.dedup();
        f
    }

    /// Family-level branches: coupled with a shared error, coupled without,
    /// or uncoupled.
    fn latents(&self, c: &CandidateSpec) -> Vec<(Latent<'a>, f64)> {
        let mut out: Vec<(Latent<'a>, f64)> = vec![(Latent::new(), 1.0)];
        let pi = if c.correlated() { self.spec.agent_model.pi } else { 0.0 };
        for f in self.families() {
            let e = self.eps(f);
            let branches = [(Some(true), pi * e), (Some(false), pi * (1.0 - e)), (None, 1.0 - pi)];
            let mut next = vec![];
            for (latent, p) in &out {
                for (b, q) in branches {
                    if q == 0.0 {
                        continue;
                    }
                    let mut l = latent.clone();
                    l.insert(f, b);
                    next.push((l, p * q));
                }
            }
            out = next;
        }
        out
    }

    fn candidate(&self, c: &CandidateSpec) -> Dist {
        if !c.self_critique {
            return Dist::from([(Outcome::IntakeRejected, 1.0)]);
        }
        let mut dist = Dist::new();
        for (latent, w) in self.latents(c) {
            Self::add(&mut dist, self.walk(c, &latent, 'A', 0, false), w);
        }
        dist
    }
}

/// Exact per-candidate outcome distribution for `spec` under `pipeline`.
pub fn oracle(spec: &WorldSpec, pipeline: &PipelineConfig) -> Result<OracleResult, OracleError> {
    let mut config = spec.campaign_config("oracle", spec.seed);
    config.pipeline = pipeline.clone();
    config
        .validate()
        .map_err(|e| OracleError::UnsupportedWorld(e.to_string()))?;
    spec.validate()
        .map_err(|e| OracleError::UnsupportedWorld(e.to_string()))?;
    if let Some(c) = spec.candidates.iter().find(|c| c.wave != 1) {
        return Err(OracleError::UnsupportedWorld(format!(
            "{} is generated in wave {}; only single-wave worlds are enumerated",
            c.id, c.wave
        )));
    }
    if spec.agent_model.senior_refusal_probability > 0.0 {
        return Err(OracleError::UnsupportedWorld("senior refusals park candidates".into()));
    }
    let e = Enumerator {
        spec,
        p: pipeline,
        arbiter_family: pipeline.arbiter_family.as_deref().unwrap_or(&pipeline.default_family),
    };
    let agents = ['A', 'B', 'D'].iter().map(|s| e.stochastic(&e.seats(*s))).max().unwrap_or(0);
    if spec.candidates.len() > MAX_CANDIDATES || agents > MAX_AGENTS {
        return Err(OracleError::TooLargeToEnumerate {
            candidates: spec.candidates.len(),
            agents,
        });
    }
    Ok(OracleResult {
        per_candidate: spec.candidates.iter().map(|c| (c.id.clone(), e.candidate(c))).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::world::{ErrorClass, GroundTruth};

    fn world(n: usize) -> WorldSpec {
        let mut w = WorldSpec::template(n, 1);
        w.validation.infeasible_probability = 0.0;
        w
    }

    #[test]
    fn perfect_adversaries_kill_false_positive_at_a() {
        let mut w = world(1);
        w.candidates[0].ground_truth = GroundTruth::FalsePositive;
        w.agent_model.epsilon = 0.0;
        let r = oracle(&w, &w.pipeline).unwrap();
        assert_eq!(r.probability("w01", Outcome::KilledA), 1.0);
    }

    #[test]
    fn distributions_sum_to_one() {
        let mut w = world(3);
        w.agent_model.epsilon = 0.3;
        w.validation.infeasible_probability = 0.2;
        w.candidates[0].refutable_subclaim = Some("remote reach".into());
        let r = oracle(&w, &w.pipeline).unwrap();
        for d in r.per_candidate.values() {
            assert!((d.values().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_agent_false_positive_survival_closed_form() {
        let mut w = world(1);
        w.candidates[0].ground_truth = GroundTruth::FalsePositive;
        w.candidates[0].error_class = ErrorClass::ReasoningError;
        w.pipeline.empirical_gate = false;
        w.agent_model.epsilon = 0.5;
        let r = oracle(&w, &w.pipeline).unwrap();
        // A: 3 seats err; B: 3 adversaries err and at least one of 2 creatives errs; D: 1 critic errs.
        let e: f64 = 0.5;
        let expect = e.powi(3) * e.powi(3) * (1.0 - (1.0 - e).powi(2)) * e;
        assert!((r.disclosure("w01") - expect).abs() < 1e-12);
    }

    #[test]
    fn limits_are_enforced() {
        let w = world(7);
        assert!(matches!(
            oracle(&w, &w.pipeline),
            Err(OracleError::TooLargeToEnumerate { candidates: 7, .. })
        ));
        let mut w = world(1);
        w.pipeline.arbiter_panel = 4;
        assert!(matches!(oracle(&w, &w.pipeline), Err(OracleError::TooLargeToEnumerate { agents: 9, .. })));
        w.agent_model.epsilon = 1.0;
        w.pipeline.arbiter_panel = 80;
        assert!(oracle(&w, &w.pipeline).is_ok());
    }
}
