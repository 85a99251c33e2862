mod common;

use gauntlet_core::candidate::{EventKind, Flag, GateOutcome, LifecycleState, Stage};
use gauntlet_core::metrics;
use gauntlet_core::overrides::{apply_override, OverrideAction, OverrideRequest};
use gauntlet_core::sim::{self, World};
use gauntlet_core::state::NotificationKind;

const CID: &str = "lcms-cubesize";

fn resurrect(cid: &str) -> OverrideRequest {
    OverrideRequest {
        operator_id: "operator-1".into(),
        action: OverrideAction::Resurrect,
        candidate_id: cid.into(),
        justification: "size product wraps before the guard; reproduced by hand".into(),
        target_stage: None,
        severity_vector: None,
    }
}

#[test]
fn unanimous_false_kill_is_restored_by_a_human_resurrection() {
    let spec = common::world("world_lcms2");
    let world = World::new(spec.clone()).with_seed(spec.seed);
    let engine = sim::engine(&world, spec.campaign_config("lcms2", spec.seed));
    let truth = spec.truth();

    let mut state = engine.run_campaign(None).unwrap();
    let before = metrics::precision_recall(&state, &truth);
    assert!(before.recall.unwrap() < 1.0);
    assert_eq!(before.false_kills, vec![CID.to_string()]);
    let killed = state.candidates[CID].clone();
    assert!(matches!(killed.state, LifecycleState::Killed { stage: Stage::A, .. }));
    assert!(killed.has_flag(Flag::UnanimityWarned));
    assert!(state
        .notifications
        .iter()
        .any(|n| n.kind == NotificationKind::ResurrectionSuggested && n.candidate_id.as_deref() == Some(CID)));

    apply_override(&mut state, resurrect(CID), 10_000).unwrap();
    assert_eq!(state.candidates[CID].state, LifecycleState::InStage { stage: Stage::A });
    let state = engine.run_campaign(Some(state)).unwrap();

    let after = metrics::precision_recall(&state, &truth);
    assert_eq!(after.recall, Some(1.0));
    assert!(after.false_kills.is_empty());
    let c = &state.candidates[CID];
    assert_eq!(c.state, LifecycleState::DisclosureReady);
    assert!(c.has_flag(Flag::Resurrected));

    // The full kill history is still there, ahead of the resurrection.
    assert_eq!(&c.history[..killed.history.len()], &killed.history[..]);
    let kill_at = c
        .history
        .iter()
        .position(|e| matches!(e.kind, EventKind::GateDecided { outcome: GateOutcome::Kill, .. }))
        .unwrap();
    let override_at = c
        .history
        .iter()
        .position(|e| matches!(e.kind, EventKind::Overridden { action: OverrideAction::Resurrect, .. }))
        .unwrap();
    assert!(kill_at < override_at);
    let kills: Vec<_> = state
        .decisions_for(CID)
        .filter(|d| d.outcome == GateOutcome::Kill)
        .collect();
    assert_eq!(kills.len(), 1);
    assert_eq!(kills[0].attempt, 0);
    assert!(state.decisions_for(CID).any(|d| d.attempt == 1 && d.stage == Stage::D));

    // The false positive stays dead.
    assert!(matches!(state.candidates["lcms-prelin"].state, LifecycleState::Killed { .. }));
}

#[test]
fn resurrecting_a_live_candidate_is_rejected_without_a_trace() {
    let spec = common::world("world_perfect");
    let mut state = sim::run_world(&spec, "perfect", spec.seed).unwrap();
    let before = state.candidates["p01"].clone();
    let err = apply_override(&mut state, resurrect("p01"), 1).unwrap_err();
    assert_eq!(err.code(), "NotKilled");
    assert_eq!(state.candidates["p01"], before);
    assert!(state.overrides.is_empty());
}

#[test]
fn perfect_reviewers_give_perfect_precision_and_recall() {
    let spec = common::world("world_perfect");
    let state = sim::run_world(&spec, "perfect", spec.seed).unwrap();
    let pr = metrics::precision_recall(&state, &spec.truth());
    assert_eq!((pr.precision, pr.recall), (Some(1.0), Some(1.0)));
    let r = metrics::funnel(&state);
    assert_eq!(r.aggregate.kills.a, 8);
    assert_eq!(r.aggregate.survivors, 2);
}
