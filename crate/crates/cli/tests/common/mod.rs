#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_gauntlet")
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

/// Run the binary against `root` with the token variable set, so any leak
/// of it into stores or responses is detectable.
pub fn gauntlet(root: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .arg("--root")
        .arg(root)
        .args(args)
        .env("GAUNTLET_API_TOKEN", SECRET)
        .output()
        .expect("binary runs")
}

pub const SECRET: &str = "tok-3f9a1c-not-for-logs";

pub fn ok(root: &Path, args: &[&str]) -> String {
    let out = gauntlet(root, args);
    assert!(
        out.status.success(),
        "gauntlet {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Every file under `dir`, keyed by relative path.
pub fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(base: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(base, &p, out);
            } else {
                let rel = p.strip_prefix(base).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// A JSON-lines file with every `timestamp` zeroed and every envelope
/// digest (which covers the timestamp) dropped.
pub fn normalize_timestamps(text: &str) -> String {
    fn scrub(v: &mut serde_json::Value) {
        match v {
            serde_json::Value::Object(m) => {
                m.remove("digest");
                for (k, x) in m.iter_mut() {
                    if k == "timestamp" {
                        *x = serde_json::Value::from(0);
                    } else {
                        scrub(x);
                    }
                }
            }
            serde_json::Value::Array(a) => a.iter_mut().for_each(scrub),
            _ => {}
        }
    }
    text.lines()
        .map(|l| match serde_json::from_str::<serde_json::Value>(l) {
            Ok(mut v) => {
                scrub(&mut v);
                v.to_string() + "\n"
            }
            Err(_) => l.to_string() + "\n",
        })
        .collect()
}
