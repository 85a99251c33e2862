mod common;

use std::time::Instant;

use gauntlet_core::sim::{self, Outcome, WorldSpec};

const TRIALS: u64 = 10_000;
const TOLERANCE: f64 = 0.02;

fn worlds() -> Vec<(String, WorldSpec)> {
    let mut out: Vec<(String, WorldSpec)> = (1..=10)
        .map(|i| {
            let name = format!("enumerable/e{i:02}");
            let spec = common::world(&name);
            (name, spec)
        })
        .collect();
    for name in ["world_basic", "world_unanimous"] {
        out.push((name.to_string(), common::world(name)));
    }
    out
}

#[test]
fn monte_carlo_matches_the_oracle_on_every_enumerable_world() {
    let start = Instant::now();
    let mut failures = vec![];
    for (name, spec) in worlds() {
        let exact = sim::oracle(&spec, &spec.pipeline).unwrap_or_else(|e| panic!("{name}: {e}"));
        for dist in exact.per_candidate.values() {
            let total: f64 = dist.values().sum();
            assert!((total - 1.0).abs() < 1e-9, "{name}: distribution sums to {total}");
        }
        let mc = sim::run_montecarlo(&spec, &spec.pipeline, TRIALS).unwrap();
        let dev = mc.max_deviation(&exact);
        println!("{name}: max deviation {dev:.4} over {TRIALS} trials");
        if dev > TOLERANCE {
            failures.push(format!("{name}: {dev:.4}"));
        }
    }
    assert!(failures.is_empty(), "worlds off by more than {TOLERANCE}: {failures:?}");
    assert!(start.elapsed().as_secs() < 300);
}

#[test]
fn every_outcome_cell_is_exercised_somewhere() {
    let mut seen = std::collections::BTreeSet::new();
    for (_, spec) in worlds() {
        let exact = sim::oracle(&spec, &spec.pipeline).unwrap();
        for dist in exact.per_candidate.values() {
            seen.extend(dist.iter().filter(|(_, p)| **p > 0.0).map(|(o, _)| *o));
        }
    }
    for o in [
        Outcome::IntakeRejected,
        Outcome::KilledA,
        Outcome::KilledB,
        Outcome::KilledC,
        Outcome::KilledD,
        Outcome::DisclosureConfirmed,
        Outcome::DisclosureProvisional,
    ] {
        assert!(seen.contains(&o), "no world reaches {o:?}");
    }
}

#[test]
fn worlds_beyond_the_limits_are_refused() {
    let big = WorldSpec::template(7, 1);
    let err = sim::oracle(&big, &big.pipeline).unwrap_err();
    assert_eq!(err.code(), "TooLargeToEnumerate");

    let mut crowded = WorldSpec::template(1, 1);
    crowded.pipeline.arbiter_panel = 4;
    let err = sim::oracle(&crowded, &crowded.pipeline).unwrap_err();
    assert_eq!(err.code(), "TooLargeToEnumerate");

    let mut waves = WorldSpec::template(2, 1);
    waves.candidates[1].wave = 2;
    assert_eq!(sim::oracle(&waves, &waves.pipeline).unwrap_err().code(), "UnsupportedWorld");
}
