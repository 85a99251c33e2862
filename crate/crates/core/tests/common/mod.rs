#![allow(dead_code)]

use std::path::PathBuf;

use gauntlet_core::candidate::DefectClass;
use gauntlet_core::sim::world::{AgentModel, CandidateSpec, ErrorClass, GroundTruth, ValidationModel};
use gauntlet_core::sim::WorldSpec;
use proptest::prelude::*;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn world(name: &str) -> WorldSpec {
    WorldSpec::load(&fixtures().join(format!("{name}.toml"))).expect("fixture world loads")
}

#[derive(Debug, Clone)]
struct Cand {
    truth: bool,
    correlated: bool,
    class: usize,
    scope: usize,
    refutable: bool,
    uplift: bool,
    contaminated: bool,
    critique: bool,
    infeasible: Option<f64>,
}

fn cand() -> impl Strategy<Value = Cand> {
    (
        any::<bool>(),
        any::<bool>(),
        0..4usize,
        0..3usize,
        prop::bool::weighted(0.2),
        prop::bool::weighted(0.1),
        prop::bool::weighted(0.1),
        prop::bool::weighted(0.9),
        prop::option::weighted(0.3, 0.0..=1.0f64),
    )
        .prop_map(
            |(truth, correlated, class, scope, refutable, uplift, contaminated, critique, infeasible)| Cand {
                truth,
                correlated,
                class,
                scope,
                refutable,
                uplift,
                contaminated,
                critique,
                infeasible,
            },
        )
}

/// Single-wave worlds over the whole parameter space, including refusals,
/// parked candidates, remote validation and a disabled empirical gate.
pub fn single_wave_world() -> impl Strategy<Value = WorldSpec> {
    let model = (0.0..=1.0f64, 0.0..=1.0f64, 0.0..0.3f64, prop::option::weighted(0.2, 0.0..0.5f64));
    let validation = (0.0..=1.0f64, 0.0..=1.0f64, 0.0..0.3f64);
    let pipeline = (any::<bool>(), prop::bool::weighted(0.85), 0..3usize, 0..4u32, any::<bool>(), 1..3usize);
    (
        any::<u64>(),
        prop::collection::vec(cand(), 1..=6),
        model,
        validation,
        pipeline,
    )
        .prop_map(|(seed, cands, (eps, pi, refusal, senior), (inf, remote_inf, verr), pipe)| {
            let (remote, gate, arbiters, reentries, resurrection, critics) = pipe;
            let mut spec = WorldSpec::template(0, seed);
            spec.agent_model = AgentModel {
                epsilon: eps,
                pi,
                refusal_probability: refusal,
                senior_refusal_probability: senior.unwrap_or(0.0),
                ..AgentModel::default()
            };
            spec.validation = ValidationModel {
                infeasible_probability: inf,
                remote_infeasible_probability: remote_inf,
                validator_error: verr,
            };
            spec.target.subsystems.truncate(3);
            let p = &mut spec.pipeline;
            p.remote_validation = remote;
            p.empirical_gate = gate;
            p.arbiter_panel = arbiters;
            p.max_reentries = reentries;
            p.resurrection_agent = resurrection;
            p.critic_families = (2..2 + critics).map(|f| format!("family-{f}")).collect();
            p.max_waves = 1;
            p.parallelism = 1;
            let classes = [DefectClass::MemorySafety, DefectClass::Logic, DefectClass::CryptoOracle, DefectClass::Other];
            spec.candidates = cands
                .into_iter()
                .enumerate()
                .map(|(i, c)| CandidateSpec {
                    id: format!("g{:02}", i + 1),
                    title: format!("generated candidate {}", i + 1),
                    defect_class: classes[c.class],
                    summary: String::new(),
                    entry_points: vec![format!("src/g{i}.c:{}", 10 + i)],
                    scope: spec.target.subsystems[c.scope].clone(),
                    source: None,
                    wave: 1,
                    ground_truth: if c.truth {
                        GroundTruth::TruePositive
                    } else {
                        GroundTruth::FalsePositive
                    },
                    error_class: if c.correlated {
                        ErrorClass::CorrelatedPriorError
                    } else {
                        ErrorClass::ReasoningError
                    },
                    overclaimed: false,
                    claimed_vector: None,
                    assessed_vector: None,
                    self_critique: c.critique,
                    refutable_subclaim: c.refutable.then(|| "remote reachability".into()),
                    requires_uplift: c.uplift,
                    contaminated_check: c.contaminated,
                    infeasible_probability: c.infeasible,
                })
                .collect();
            spec
        })
}
