//! Deterministic simulation: ground-truth worlds, scripted agents, an
//! exhaustive-enumeration oracle and a Monte Carlo driver for the engine.

pub mod montecarlo;
pub mod oracle;
pub mod world;

use std::sync::Arc;

use crate::agent::Gateway;
use crate::engine::{CampaignConfig, Engine, EngineError};
use crate::state::CampaignState;
use crate::util::LogicalClock;

pub use montecarlo::{run_montecarlo, EmpiricalDistribution};
pub use oracle::{oracle, OracleError, OracleResult, Outcome};
pub use world::{World, WorldError, WorldSpec};

/// An engine wired to `world` for agents, validation oracle and target probe,
/// on a logical clock so that identical seeds give identical logs.
pub fn engine(world: &World, config: CampaignConfig) -> Engine {
    let shared = Arc::new(world.clone());
    Engine::new(config, Gateway::scripted(shared.clone()))
        .with_probe(shared.clone())
        .with_oracle(shared)
        .with_clock(Arc::new(LogicalClock::default()))
}

/// Run `spec` to completion in memory with `seed` for both world and campaign.
pub fn run_world(spec: &WorldSpec, campaign_id: &str, seed: u64) -> Result<CampaignState, EngineError> {
    let world = World::new(spec.clone()).with_seed(seed);
    engine(&world, spec.campaign_config(campaign_id, seed)).run_campaign(None)
}
