//! Seeded Monte Carlo over full engine runs.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidate::{Flag, LifecycleState, Stage};
use crate::engine::{EngineError, PipelineConfig};
use crate::sim::oracle::{OracleResult, Outcome};
use crate::sim::world::{World, WorldSpec};
use crate::state::CampaignState;
use crate::util::derive_seed;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    pub trials: u64,
    pub counts: BTreeMap<String, BTreeMap<Outcome, u64>>,
}

impl EmpiricalDistribution {
    pub fn frequency(&self, cid: &str, outcome: Outcome) -> f64 {
        if self.trials == 0 {
            return 0.0;
        }
        let n = self.counts.get(cid).and_then(|c| c.get(&outcome)).copied().unwrap_or(0);
        n as f64 / self.trials as f64
    }

    /// Largest absolute gap between a frequency and the oracle probability,
    /// over every candidate and outcome cell.
    pub fn max_deviation(&self, oracle: &OracleResult) -> f64 {
        let ids: std::collections::BTreeSet<&String> =
            self.counts.keys().chain(oracle.per_candidate.keys()).collect();
        ids.iter()
            .flat_map(|cid| {
                Outcome::ALL
                    .iter()
                    .map(move |o| (self.frequency(cid, *o) - oracle.probability(cid, *o)).abs())
            })
            .fold(0.0, f64::max)
    }
}

/// Where each world candidate ended up in one finished campaign.
pub fn classify(spec: &WorldSpec, state: &CampaignState) -> BTreeMap<String, Outcome> {
    spec.candidates
        .iter()
        .map(|c| {
            let outcome = match state.candidates.get(&c.id) {
                Some(cand) => match &cand.state {
                    LifecycleState::Killed { stage, .. } => match stage {
                        Stage::A => Outcome::KilledA,
                        Stage::B => Outcome::KilledB,
                        Stage::C => Outcome::KilledC,
                        Stage::D => Outcome::KilledD,
                    },
                    LifecycleState::DisclosureReady if cand.has_flag(Flag::Provisional) => {
                        Outcome::DisclosureProvisional
                    }
                    LifecycleState::DisclosureReady => Outcome::DisclosureConfirmed,
                    _ => Outcome::InFlight,
                },
                None if state.intake_rejections.iter().any(|r| r.title == c.title) => Outcome::IntakeRejected,
                None => Outcome::NotGenerated,
            };
            (c.id.clone(), outcome)
        })
        .collect()
}

/// Run `trials` campaigns with seeds derived from the world seed and tally
/// each candidate's final outcome. Trials run in parallel; each is
/// deterministic in its own seed.
pub fn run_montecarlo(
    spec: &WorldSpec,
    pipeline: &PipelineConfig,
    trials: u64,
) -> Result<EmpiricalDistribution, EngineError> {
    let base = World::new(spec.clone());
    let outcomes: Vec<BTreeMap<String, Outcome>> = (0..trials.max(1))
        .into_par_iter()
        .map(|t| {
            let seed = derive_seed(spec.seed, &["trial", &t.to_string()]);
            let world = base.with_seed(seed);
            let mut config = spec.campaign_config("montecarlo", seed);
            config.pipeline = pipeline.clone();
            config.pipeline.parallelism = 1;
            let state = super::engine(&world, config).sequential().run_campaign(None)?;
            Ok(classify(spec, &state))
        })
        .collect::<Result<_, EngineError>>()?;
    let mut dist = EmpiricalDistribution {
        trials: trials.max(1),
        counts: BTreeMap::new(),
    };
    for trial in outcomes {
        for (cid, o) in trial {
            *dist.counts.entry(cid).or_default().entry(o).or_default() += 1;
        }
    }
    Ok(dist)
}
