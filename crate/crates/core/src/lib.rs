//! Adversarial stage-gated review engine for machine-generated defect candidates.
//!
//! Candidates are produced by scope-partitioned hunters and then pushed through
//! four escalating gates: kill-mandate review (A), context-asymmetric review (B),
//! empirical validation with severity recalibration (C) and a cross-family
//! critic (D). Every dispatch, verdict and decision is recorded in append-only
//! ledgers so that any candidate's state can be replayed and audited.
//!
//! The crate runs end-to-end against the deterministic [`sim`] backend, which
//! also ships an exhaustive-enumeration [`sim::oracle`] for checking the engine.

pub mod agent;
pub mod candidate;
pub mod context;
pub mod engine;
pub mod metrics;
pub mod overrides;
pub mod rules;
pub mod sim;
pub mod state;
pub mod store;
pub mod util;
pub mod validation;

pub use candidate::{Candidate, Claim, Event, EventKind, LifecycleState, Origin, Stage};
pub use engine::{CampaignConfig, Engine};
pub use state::CampaignState;
