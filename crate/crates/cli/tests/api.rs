mod common;

use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::time::Duration;

use common::{fixture, ok, SECRET};
use serde_json::{json, Value};

struct Server {
    child: Child,
    base: String,
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn serve(root: &Path) -> Server {
    let mut child = Command::new(common::bin())
        .arg("--root")
        .arg(root)
        .args(["serve", "--addr", "127.0.0.1:0"])
        .env("GAUNTLET_API_TOKEN", SECRET)
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stderr.take().unwrap()).read_line(&mut line).unwrap();
    let base = line.trim().strip_prefix("listening on ").expect("listen line").to_string();
    Server { child, base }
}

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(20)))
        .build()
        .into()
}

fn get(s: &Server, path: &str) -> (u16, Value) {
    let mut r = agent().get(format!("{}{path}", s.base)).call().unwrap();
    (r.status().as_u16(), r.body_mut().read_json().unwrap())
}

fn post(s: &Server, body: &str) -> (u16, Value) {
    let mut r = agent()
        .post(format!("{}/overrides", s.base))
        .header("content-type", "application/json")
        .send(body)
        .unwrap();
    (r.status().as_u16(), r.body_mut().read_json().unwrap())
}

fn resurrect(cid: &str, why: &str) -> String {
    json!({
        "operator_id": "op",
        "action": "resurrect",
        "candidate_id": cid,
        "justification": why,
    })
    .to_string()
}

fn campaign_root(world: &str) -> tempfile::TempDir {
    let root = tempfile::tempdir().unwrap();
    ok(root.path(), &["run", "--sim", &fixture(world).to_string_lossy()]);
    root
}

#[test]
fn reads_are_versioned_and_carry_the_funnel() {
    let root = campaign_root("world_basic");
    let s = serve(root.path());
    let (code, v) = get(&s, "/");
    assert_eq!((code, v["schema"].as_str()), (200, Some("gauntlet/v1")));
    let (_, v) = get(&s, "/campaigns");
    assert_eq!(v["campaigns"][0]["campaign_id"], "world_basic");
    let (code, v) = get(&s, "/campaigns/world_basic/funnel");
    assert_eq!(code, 200);
    assert_eq!(v["funnel"]["aggregate"]["entrants"]["A"], 6);
    let (code, v) = get(&s, "/campaigns/nope/funnel");
    assert_eq!((code, v["error"]["code"].as_str()), (404, Some("UnknownCampaign")));
    let (code, v) = get(&s, "/audit");
    assert_eq!(code, 200);
    assert_eq!(v["audits"][0]["clean"], true);
}

#[test]
fn candidate_detail_has_ledgers_and_no_credentials() {
    let root = campaign_root("world_basic");
    let s = serve(root.path());
    let mut r = agent().get(format!("{}/candidates/b01", s.base)).call().unwrap();
    assert_eq!(r.status().as_u16(), 200);
    let text = r.body_mut().read_to_string().unwrap();
    assert!(!text.contains(SECRET));
    let v: Value = serde_json::from_str(&text).unwrap();
    assert!(!v["exposures"].as_array().unwrap().is_empty());
    assert!(!v["verdicts"].as_array().unwrap().is_empty());
    assert!(v["claim"].is_object());
    assert_eq!(get(&s, "/candidates/zz").0, 404);
}

#[test]
fn override_errors_map_to_statuses() {
    let root = campaign_root("world_perfect");
    let s = serve(root.path());
    let (code, v) = post(&s, &resurrect("p01", "looks real"));
    assert_eq!((code, v["error"]["code"].as_str()), (409, Some("NotKilled")));
    assert_eq!(post(&s, &resurrect("nope", "x")).0, 404);
    assert_eq!(post(&s, &resurrect("p02", " ")).0, 400);
    assert_eq!(post(&s, "{not json").0, 400);
    assert_eq!(post(&s, r#"{"action":"resurrect"}"#).0, 400);
    let overrides = std::fs::read_to_string(root.path().join("campaign/world_perfect/overrides.log")).unwrap_or_default();
    assert!(overrides.is_empty(), "rejected overrides leave no ledger entry");
}

#[test]
fn resurrect_moves_the_card_back_to_stage_a() {
    let root = campaign_root("world_lcms2");
    let s = serve(root.path());
    let (code, v) = post(&s, &resurrect("lcms-cubesize", "wraps before the guard"));
    assert_eq!(code, 200, "{v}");
    assert_eq!(v["state_label"], "InStage(A)");
    assert_eq!(v["override"]["action"], "resurrect");
    let (_, v) = get(&s, "/candidates/lcms-cubesize");
    assert!(v["flags"].as_array().unwrap().iter().any(|f| f == "resurrected"));
    let (code, _) = post(&s, &resurrect("lcms-cubesize", "again"));
    assert_eq!(code, 409);
    drop(s);
    // The CLI picks the override up and finishes the job.
    ok(root.path(), &["run", "--resume"]);
    let s = serve(root.path());
    let (_, v) = get(&s, "/candidates/lcms-cubesize");
    assert_eq!(v["state_label"], "DisclosureReady");
}

#[test]
fn event_stream_names_unanimity_warnings() {
    let root = campaign_root("world_unanimous");
    let s = serve(root.path());
    let r = agent()
        .get(format!("{}/events?campaign=world_unanimous", s.base))
        .call()
        .unwrap();
    assert_eq!(r.status().as_u16(), 200);
    let reader = BufReader::new(r.into_body().into_reader());
    let mut saw = false;
    let mut data = None;
    for line in reader.lines() {
        let line = line.unwrap();
        if line == "event: unanimity_warning" {
            saw = true;
        } else if saw && line.starts_with("data: ") {
            data = Some(line["data: ".len()..].to_string());
            break;
        }
    }
    let v: Value = serde_json::from_str(&data.expect("a unanimity_warning event")).unwrap();
    assert_eq!(v["schema"], "gauntlet/v1");
    assert_eq!(v["notification"]["kind"], "unanimity_warning");
}

#[test]
fn event_stream_delivers_overrides_applied_while_connected() {
    let root = campaign_root("world_lcms2");
    let s = serve(root.path());
    let last = {
        let (_, v) = get(&s, "/campaigns");
        v["campaigns"][0]["campaign_id"].as_str().unwrap().to_string()
    };
    let seq = std::fs::read_to_string(root.path().join(format!("campaign/{last}/notifications.log")))
        .unwrap()
        .lines()
        .count();
    let r = agent()
        .get(format!("{}/events?since={seq}", s.base))
        .call()
        .unwrap();
    let base = s.base.clone();
    let poster = std::thread::spawn(move || {
        std::thread::sleep(Duration::from_millis(300));
        agent()
            .post(format!("{base}/overrides"))
            .send(resurrect("lcms-cubesize", "wraps before the guard"))
            .unwrap()
            .status()
            .as_u16()
    });
    let first_event = BufReader::new(r.into_body().into_reader())
        .lines()
        .map(|l| l.unwrap())
        .find(|l| l.starts_with("event: "))
        .unwrap();
    assert_eq!(poster.join().unwrap(), 200);
    assert_eq!(first_event, "event: override_applied");
}
