//! Prepare: pin a release, collect hotspots. Research dispatches for the
//! prior-art brief are driven by the engine.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::Command;

use thiserror::Error;

use crate::context::Hotspot;

/// Read-only view of the target repository.
pub trait TargetProbe: Send + Sync {
    fn tags(&self) -> Vec<String>;
    fn head(&self) -> Option<String>;
    fn hotspots(&self, limit: usize) -> Vec<Hotspot>;
}

/// Probe over a local git checkout.
pub struct GitProbe {
    pub path: PathBuf,
}

impl GitProbe {
    fn git(&self, args: &[&str]) -> Option<String> {
        let out = Command::new("git").arg("-C").arg(&self.path).args(args).output().ok()?;
        out.status
            .success()
            .then(|| String::from_utf8_lossy(&out.stdout).into_owned())
    }
}

impl TargetProbe for GitProbe {
    fn tags(&self) -> Vec<String> {
        self.git(&["tag", "--list"])
            .map(|s| s.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
            .unwrap_or_default()
    }

    fn head(&self) -> Option<String> {
        self.git(&["rev-parse", "HEAD"]).map(|s| s.trim().to_string())
    }

    fn hotspots(&self, limit: usize) -> Vec<Hotspot> {
        let Some(log) = self.git(&["log", "--name-only", "--pretty=format:"]) else {
            return vec![];
        };
        let mut churn: BTreeMap<&str, u64> = BTreeMap::new();
        for line in log.lines().map(str::trim).filter(|l| !l.is_empty()) {
            *churn.entry(line).or_default() += 1;
        }
        rank(churn.into_iter().map(|(r, c)| Hotspot {
            region: r.to_string(),
            churn: c,
        }), limit)
    }
}

/// Probe backed by fixed values from configuration or a sim world.
#[derive(Debug, Clone, Default)]
pub struct StaticProbe {
    pub tags: Vec<String>,
    pub head: Option<String>,
    pub hotspots: Vec<Hotspot>,
}

impl TargetProbe for StaticProbe {
    fn tags(&self) -> Vec<String> {
        self.tags.clone()
    }

    fn head(&self) -> Option<String> {
        self.head.clone()
    }

    fn hotspots(&self, limit: usize) -> Vec<Hotspot> {
        rank(self.hotspots.iter().cloned(), limit)
    }
}

/// Highest churn first, ties by region name.
pub fn rank(hotspots: impl Iterator<Item = Hotspot>, limit: usize) -> Vec<Hotspot> {
    let mut v: Vec<Hotspot> = hotspots.collect();
    v.sort_by(|a, b| b.churn.cmp(&a.churn).then_with(|| a.region.cmp(&b.region)));
    v.truncate(limit);
    v
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("no release tag found")]
pub struct NoReleaseBranch;

const PRERELEASE: [&str; 5] = ["rc", "alpha", "beta", "dev", "pre"];

fn release_version(tag: &str) -> Option<Vec<u64>> {
    let lower = tag.to_ascii_lowercase();
    if PRERELEASE.iter().any(|p| lower.contains(p)) {
        return None;
    }
    let start = lower.find(|c: char| c.is_ascii_digit())?;
    let parts: Vec<u64> = lower[start..]
        .split(['.', '-', '_'])
        .map_while(|p| p.parse().ok())
        .collect();
    (!parts.is_empty()).then_some(parts)
}

/// The latest stable release tag: highest numeric version, pre-releases excluded.
pub fn pin_release(tags: &[String]) -> Result<String, NoReleaseBranch> {
    tags.iter()
        .filter_map(|t| release_version(t).map(|v| (v, t)))
        .max_by(|a, b| a.0.cmp(&b.0).then_with(|| b.1.cmp(a.1)))
        .map(|(_, t)| t.clone())
        .ok_or(NoReleaseBranch)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tags(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn picks_latest_stable() {
        let t = tags(&["v2.9", "v2.10", "v2.11-rc1", "lcms2.16", "nightly"]);
        assert_eq!(pin_release(&t).unwrap(), "lcms2.16");
        let t = tags(&["v1.2.3", "v1.10.0", "v1.10.0-beta"]);
        assert_eq!(pin_release(&t).unwrap(), "v1.10.0");
    }

    #[test]
    fn no_tags_is_an_error() {
        assert_eq!(pin_release(&[]), Err(NoReleaseBranch));
        assert_eq!(pin_release(&tags(&["main", "v3-rc1"])), Err(NoReleaseBranch));
    }

    #[test]
    fn hotspots_rank_by_churn() {
        let p = StaticProbe {
            hotspots: vec![
                Hotspot { region: "b".into(), churn: 3 },
                Hotspot { region: "a".into(), churn: 3 },
                Hotspot { region: "c".into(), churn: 9 },
            ],
            ..StaticProbe::default()
        };
        let regions: Vec<String> = p.hotspots(2).into_iter().map(|h| h.region).collect();
        assert_eq!(regions, ["c", "a"]);
    }
}
