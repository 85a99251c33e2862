mod common;

use std::time::Instant;

use gauntlet_core::candidate::Stage;
use gauntlet_core::metrics::{self, percent, FunnelReport};
use gauntlet_core::sim;
use gauntlet_core::store::load_candidate_log;
use proptest::prelude::*;

fn replay(name: &str) -> FunnelReport {
    let state = load_candidate_log(&common::fixtures().join("logs").join(name)).expect("fixture log loads");
    metrics::funnel(&state)
}

#[test]
fn security_funnel_replays_135_of_171() {
    let start = Instant::now();
    let r = replay("funnel_171.jsonl");
    let agg = &r.aggregate;
    assert_eq!(agg.entrants.a, 171);
    assert_eq!(agg.kills.total(), 135);
    assert_eq!(r.kill_rate_overall, Some(135.0 / 171.0));
    assert_eq!(percent(r.kill_rate_overall.unwrap()), 79);
    assert_eq!(percent(r.kill_rate_by_stage.a.unwrap()), 63);
    // Stage-B rate is measured over the Stage-A survivors that entered B.
    assert_eq!(agg.entrants.b, 171 - agg.kills.a);
    assert_eq!(percent(r.kill_rate_by_stage.b.unwrap()), 42);
    assert_eq!(agg.survivors, 36);
    assert!(start.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn subset_funnel_replays_25_of_30() {
    let r = replay("funnel_30.jsonl");
    assert_eq!(r.aggregate.entrants.a, 30);
    assert_eq!(r.aggregate.kills.total(), 25);
    assert_eq!(percent(r.kill_rate_overall.unwrap()), 83);
}

#[test]
fn stage_a_fixture_kills_63_percent() {
    let state = load_candidate_log(&common::fixtures().join("logs/funnel_100.jsonl")).unwrap();
    let rates = metrics::stage_kill_rates(&state);
    assert_eq!(rates.a, Some(0.63));
    assert_eq!(rates.b, Some(16.0 / 37.0));
    assert_eq!(rates.c, Some(0.0));
}

#[test]
fn two_wave_merge_lets_stage_c_roster_exceed_stage_b() {
    let r = replay("two_wave.jsonl");
    // Hand count: wave 1 sends 6/4/4/4 into A/B/C/D and wave 2 sends 3/2/2/2.
    // The four wave-1 C entrants are validated again remotely in window 2.
    assert_eq!(r.per_wave.len(), 2);
    assert_eq!(
        (r.per_wave[0].entrants.a, r.per_wave[0].entrants.b, r.per_wave[0].entrants.c, r.per_wave[0].entrants.d),
        (6, 4, 4, 4)
    );
    assert_eq!(
        (r.per_wave[1].entrants.a, r.per_wave[1].entrants.b, r.per_wave[1].entrants.c, r.per_wave[1].entrants.d),
        (3, 2, 2, 2)
    );
    assert!(r.per_wave.iter().all(|w| w.entrants.is_monotone()));
    assert_eq!(r.merged_rosters.b, 6);
    assert_eq!(r.merged_rosters.c, 10);
    assert!(r.merged_rosters.c > r.merged_rosters.b);
}

#[test]
fn recorded_two_wave_log_matches_a_fresh_run() {
    let spec = common::world("world_two_wave");
    let state = sim::run_world(&spec, "two-wave", spec.seed).unwrap();
    assert_eq!(metrics::funnel(&state), replay("two_wave.jsonl"));
}

#[test]
fn table_mirrors_the_report() {
    let table = metrics::render_table(&replay("funnel_171.jsonl"));
    assert!(table.contains("overall"));
    assert!(table.contains("79%"));
    assert!(table.contains("63%"));
}

fn closure_holds(r: &FunnelReport) -> bool {
    r.per_wave
        .iter()
        .chain(std::iter::once(&r.aggregate))
        .all(|w| w.kills.total() + w.survivors + w.in_flight == w.entrants.a)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, ..ProptestConfig::default() })]

    #[test]
    fn single_wave_campaigns_are_monotone(spec in common::single_wave_world()) {
        let state = sim::run_world(&spec, "prop", spec.seed).unwrap();
        let r = metrics::funnel(&state);
        prop_assert!(r.aggregate.entrants.is_monotone(), "{:?}", r.aggregate);
        prop_assert!(r.merged_rosters.is_monotone(), "{:?}", r.merged_rosters);
        prop_assert!(closure_holds(&r));
        for s in Stage::ALL {
            prop_assert!(r.aggregate.kills.get(s) <= r.aggregate.entrants.get(s));
        }
        let rejected = spec.candidates.iter().filter(|c| !c.self_critique).count() as u64;
        // A hunter refused at both tiers generates nothing.
        if spec.agent_model.senior_refusal_probability == 0.0 {
            prop_assert_eq!(r.aggregate.intake_rejected, rejected);
            prop_assert_eq!(r.aggregate.entrants.a + rejected, spec.candidates.len() as u64);
        } else {
            prop_assert!(r.aggregate.intake_rejected <= rejected);
        }
    }
}
