mod common;

use common::{fixture, gauntlet, normalize_timestamps, ok, tree};
use gauntlet_core::store::Store;
use serde_json::Value;

fn world(name: &str) -> String {
    fixture(name).to_string_lossy().into_owned()
}

#[test]
fn same_seed_gives_byte_identical_stores() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for root in [a.path(), b.path()] {
        ok(root, &["run", "--sim", &world("world_two_wave"), "--seed", "11", "--campaign", "det"]);
    }
    let (ta, tb) = (
        tree(&Store::campaign_dir(a.path(), "det")),
        tree(&Store::campaign_dir(b.path(), "det")),
    );
    assert!(ta.keys().any(|k| k.ends_with("events.log")));
    assert_eq!(ta, tb);
}

#[test]
fn wall_clock_runs_match_once_timestamps_are_normalized() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for root in [a.path(), b.path()] {
        ok(root, &["run", "--sim", &world("world_basic"), "--seed", "5", "--wall-clock"]);
    }
    let (ta, tb) = (
        tree(&Store::campaign_dir(a.path(), "world_basic")),
        tree(&Store::campaign_dir(b.path(), "world_basic")),
    );
    assert_eq!(ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>());
    for (path, bytes) in &ta {
        if path.ends_with(".log") {
            let x = normalize_timestamps(std::str::from_utf8(bytes).unwrap());
            let y = normalize_timestamps(std::str::from_utf8(&tb[path]).unwrap());
            assert_eq!(x, y, "{path}");
        }
    }
}

#[test]
fn different_seeds_diverge_and_reruns_are_refused() {
    let root = tempfile::tempdir().unwrap();
    let w = world("world_unanimous");
    ok(root.path(), &["run", "--sim", &w, "--seed", "1", "--campaign", "s1"]);
    ok(root.path(), &["run", "--sim", &w, "--seed", "2", "--campaign", "s2"]);
    let strip = |id: &str| {
        tree(&Store::campaign_dir(root.path(), id))
            .into_iter()
            .filter(|(k, _)| k.ends_with("verdicts.log"))
            .map(|(_, v)| v)
            .collect::<Vec<_>>()
    };
    assert_ne!(strip("s1"), strip("s2"));
    let again = gauntlet(root.path(), &["run", "--sim", &w, "--campaign", "s1"]);
    assert!(!again.status.success());
    assert!(String::from_utf8_lossy(&again.stderr).starts_with("error[CampaignExists]"));
}

#[test]
fn audit_reports_zero_violations() {
    let root = tempfile::tempdir().unwrap();
    ok(root.path(), &["run", "--sim", &world("world_basic")]);
    let out = ok(root.path(), &["audit"]);
    assert!(out.lines().next() == Some("0 violations"), "{out}");
    let v: Value = serde_json::from_str(&ok(root.path(), &["audit", "--json"])).unwrap();
    assert_eq!(v["violations"], Value::Array(vec![]));
    assert_eq!(v["exposures"], v["review_dispatches"]);
}

#[test]
fn override_of_a_live_candidate_fails_with_its_code() {
    let root = tempfile::tempdir().unwrap();
    ok(root.path(), &["run", "--sim", &world("world_perfect")]);
    let out = gauntlet(root.path(), &["override", "resurrect", "p01", "--why", "hunch"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[NotKilled]"));
    let out = gauntlet(root.path(), &["override", "resurrect", "nope", "--why", "hunch"]);
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[UnknownCandidate]"));
    let out = gauntlet(root.path(), &["override", "resurrect", "p02", "--why", "  "]);
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[EmptyJustification]"));
}

#[test]
fn resurrect_and_resume_restores_recall() {
    let root = tempfile::tempdir().unwrap();
    let w = world("world_lcms2");
    ok(root.path(), &["run", "--sim", &w]);
    let report = |root: &std::path::Path| -> Value {
        serde_json::from_str(&ok(root, &["report", "--world", &w, "--json"])).unwrap()
    };
    let before = report(root.path());
    assert!(before["precision_recall"]["recall"].as_f64().unwrap() < 1.0);
    ok(root.path(), &["override", "resurrect", "lcms-cubesize", "--why", "wraps before the guard"]);
    ok(root.path(), &["run", "--resume"]);
    let after = report(root.path());
    assert_eq!(after["precision_recall"]["recall"].as_f64(), Some(1.0));
    let status = ok(root.path(), &["status"]);
    assert!(status.contains("finished"), "{status}");
}

#[test]
fn report_replays_a_fixture_log() {
    let out = ok(
        std::path::Path::new("."),
        &["report", "--log", &world("logs/funnel_171.jsonl")],
    );
    assert!(out.contains("79%") && out.contains("63%") && out.contains("42%"), "{out}");
}

#[test]
fn rules_flow_from_one_campaign_into_another() {
    let root = tempfile::tempdir().unwrap();
    ok(root.path(), &["run", "--sim", &world("world_basic"), "--rules", &world("logs/rules_56.jsonl")]);
    let listed = ok(root.path(), &["rules", "list"]);
    assert!(listed.ends_with("30 rules\n"), "{listed}");
    assert!(!listed.contains("unresolved"));
    let exported = ok(root.path(), &["rules", "export"]);
    assert_eq!(exported.lines().count(), 30);
}

#[test]
fn init_writes_a_valid_config_and_refuses_to_overwrite() {
    let root = tempfile::tempdir().unwrap();
    ok(root.path(), &["init", "demo", "--endpoint", "http://127.0.0.1:9/agent"]);
    let text = std::fs::read_to_string(Store::campaign_dir(root.path(), "demo").join("config.toml")).unwrap();
    assert!(text.contains("token_env"));
    assert!(!text.contains(common::SECRET));
    let again = gauntlet(root.path(), &["init", "demo"]);
    assert!(String::from_utf8_lossy(&again.stderr).starts_with("error[CampaignExists]"));
}

#[test]
fn world_commands_generate_validate_and_enumerate() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.toml");
    let p = path.to_string_lossy();
    ok(dir.path(), &["world", "generate", "--candidates", "3", "--out", &p]);
    assert!(ok(dir.path(), &["world", "validate", &p]).contains("3 candidates"));
    let v: Value = serde_json::from_str(&ok(dir.path(), &["world", "oracle", &world("enumerable/e01"), "--json"])).unwrap();
    for dist in v["oracle"]["per_candidate"].as_object().unwrap().values() {
        let total: f64 = dist.as_object().unwrap().values().map(|p| p.as_f64().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }
}

#[test]
fn store_never_holds_the_agent_token() {
    let root = tempfile::tempdir().unwrap();
    ok(root.path(), &["run", "--sim", &world("world_basic")]);
    for (path, bytes) in tree(root.path()) {
        assert!(!String::from_utf8_lossy(&bytes).contains(common::SECRET), "{path}");
    }
}
