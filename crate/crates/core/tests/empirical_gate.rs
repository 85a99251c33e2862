mod common;

use gauntlet_core::candidate::DefectClass;
use gauntlet_core::sim::world::{AgentModel, CandidateSpec, ErrorClass, GroundTruth, ValidationModel};
use gauntlet_core::sim::{self, montecarlo, Outcome, WorldSpec};

const CID: &str = "cms-rsa-oracle";

fn bleichenbacher(panel: usize, gate: bool) -> WorldSpec {
    let mut spec = common::world("world_bleichenbacher");
    spec.pipeline.arbiter_panel = panel;
    spec.pipeline.empirical_gate = gate;
    spec
}

#[test]
fn refuted_false_positive_never_reaches_disclosure_whatever_the_panel() {
    for panel in [0, 1, 10, 40, 80] {
        let spec = bleichenbacher(panel, true);
        let exact = sim::oracle(&spec, &spec.pipeline).unwrap();
        assert_eq!(exact.disclosure(CID), 0.0, "panel {panel}");
        assert_eq!(exact.probability(CID, Outcome::KilledC), 1.0, "panel {panel}");
    }
}

#[test]
fn without_the_gate_the_same_false_positive_is_disclosed() {
    for panel in [0, 1, 10, 40, 80] {
        let spec = bleichenbacher(panel, false);
        let exact = sim::oracle(&spec, &spec.pipeline).unwrap();
        assert_eq!(exact.disclosure(CID), 1.0, "panel {panel}");
        assert_eq!(exact.probability(CID, Outcome::DisclosureProvisional), 1.0);
    }
}

#[test]
fn engine_agrees_on_the_80_agent_panel() {
    let gated = bleichenbacher(80, true);
    let state = sim::run_world(&gated, "bleichenbacher", gated.seed).unwrap();
    assert_eq!(montecarlo::classify(&gated, &state)[CID], Outcome::KilledC);
    let b_verdicts = state
        .verdicts
        .iter()
        .filter(|v| v.candidate_id == CID && v.stage == Some(gauntlet_core::Stage::B))
        .count();
    assert_eq!(b_verdicts, 85);
    assert!(state.decisions.iter().any(|d| d.unanimity_warning));

    let open = bleichenbacher(80, false);
    let state = sim::run_world(&open, "bleichenbacher-open", open.seed).unwrap();
    assert_eq!(montecarlo::classify(&open, &state)[CID], Outcome::DisclosureProvisional);
}

#[test]
fn gate_holds_for_imperfect_correlated_reviewers_too() {
    for eps in [0.2, 0.5, 0.8] {
        for pi in [0.5, 1.0] {
            let mut spec = bleichenbacher(2, true);
            spec.agent_model.epsilon = eps;
            spec.agent_model.pi = pi;
            let exact = sim::oracle(&spec, &spec.pipeline).unwrap();
            assert_eq!(exact.disclosure(CID), 0.0);
        }
    }
}

/// One correlated false positive with the empirical gate off, so only
/// review stands between it and disclosure.
fn grid_world(pi: f64, eps: f64) -> WorldSpec {
    let mut spec = WorldSpec::template(0, 1);
    spec.target.subsystems.truncate(3);
    spec.agent_model = AgentModel {
        epsilon: eps,
        pi,
        ..AgentModel::default()
    };
    spec.validation = ValidationModel::default();
    spec.pipeline.empirical_gate = false;
    spec.candidates = vec![CandidateSpec {
        id: "fp".into(),
        title: "correlated false positive".into(),
        defect_class: DefectClass::CryptoOracle,
        summary: String::new(),
        entry_points: vec!["src/crypto.c:1".into()],
        scope: "crypto".into(),
        source: None,
        wave: 1,
        ground_truth: GroundTruth::FalsePositive,
        error_class: ErrorClass::CorrelatedPriorError,
        overclaimed: false,
        claimed_vector: None,
        assessed_vector: None,
        self_critique: true,
        refutable_subclaim: None,
        requires_uplift: false,
        contaminated_check: false,
        infeasible_probability: None,
    }];
    spec
}

fn survive(spec: &WorldSpec) -> f64 {
    sim::oracle(spec, &spec.pipeline).unwrap().disclosure("fp")
}

/// Closed forms. Family 1 fills A (three seats) and B (five seats); a
/// coupled family passes the candidate through both with probability eps,
/// an uncoupled one only if every adversary errs and at least one of the two
/// B creatives does.
fn closed_form(pi: f64, eps: f64, arbiters: i32, critics: i32) -> f64 {
    let q = 1.0 - (1.0 - eps).powi(2);
    let family1 = pi * eps + (1.0 - pi) * eps.powi(6 + arbiters) * q;
    family1 * eps.powi(critics)
}

#[test]
fn cross_family_critic_beats_same_family_critic_on_the_grid() {
    for pi in [0.4, 0.6, 0.8, 1.0] {
        for eps in [0.1, 0.3, 0.5] {
            let base = grid_world(pi, eps);
            let mut same = base.clone();
            same.pipeline.arbiter_panel = 1;
            let mut cross = base.clone();
            cross.pipeline.critic_families.push("family-3".into());

            let (p_base, p_same, p_cross) = (survive(&base), survive(&same), survive(&cross));
            for (got, want) in [
                (p_base, closed_form(pi, eps, 0, 1)),
                (p_same, closed_form(pi, eps, 1, 1)),
                (p_cross, closed_form(pi, eps, 0, 2)),
            ] {
                assert!((got - want).abs() < 1e-12, "pi {pi} eps {eps}: {got} vs {want}");
            }
            let gap = (p_base - p_cross) - (p_base - p_same);
            assert!(gap > 0.0, "pi {pi} eps {eps}: cross reduction not larger");
            let expected_gap = pi * eps * eps * (1.0 - eps);
            assert!((gap - expected_gap).abs() < 1e-12, "pi {pi} eps {eps}: gap {gap}");
        }
    }
}

#[test]
fn gate_bounds_false_positive_disclosure_by_the_infeasible_rate() {
    for pi in [0.4, 1.0] {
        for eps in [0.1, 0.5, 1.0] {
            let mut spec = grid_world(pi, eps);
            spec.pipeline.empirical_gate = true;
            spec.validation.infeasible_probability = 0.1;
            let gated = survive(&spec);
            spec.pipeline.empirical_gate = false;
            let open = survive(&spec);
            assert!(gated <= 0.1 * open + 1e-12);
            assert!((gated - 0.1 * open).abs() < 1e-12, "pass-through is scaled by the infeasible rate");
        }
    }
}
