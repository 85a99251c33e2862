//! Campaign lookup and the override write path shared by the CLI and the service.

use std::path::{Path, PathBuf};

use gauntlet_core::overrides::{apply_override, OverrideRecord, OverrideRequest};
use gauntlet_core::state::CampaignState;
use gauntlet_core::store::{Store, StoreError};
use serde::Serialize;

use crate::error::{CliError, Result};

pub const CONFIG_FILE: &str = "config.toml";
pub const WORLD_FILE: &str = "world.toml";

/// `fixtures/world_basic` names `fixtures/world_basic.toml`.
pub fn resolve_world(path: &Path) -> PathBuf {
    if path.exists() {
        return path.to_path_buf();
    }
    let with_ext = path.with_extension("toml");
    if with_ext.exists() {
        with_ext
    } else {
        path.to_path_buf()
    }
}

/// The named campaign, or the only one under `root`.
pub fn pick(root: &Path, campaign: Option<&str>) -> Result<String> {
    if let Some(c) = campaign {
        return Ok(c.to_string());
    }
    match Store::list(root).as_slice() {
        [one] => Ok(one.clone()),
        [] => Err(CliError::new("UnknownCampaign", format!("no campaigns under {}", root.display()))),
        many => Err(CliError::new(
            "AmbiguousCampaign",
            format!("{} campaigns under {}; pass --campaign", many.len(), root.display()),
        )),
    }
}

/// The named campaign, or the only one under `root` with a config file.
pub fn pick_with_config(root: &Path, campaign: Option<&str>) -> Result<String> {
    if let Some(c) = campaign {
        return Ok(c.to_string());
    }
    let dir = root.join("campaign");
    let mut ids: Vec<String> = std::fs::read_dir(&dir)
        .map(|rd| {
            rd.filter_map(|e| e.ok())
                .filter(|e| e.path().join(CONFIG_FILE).exists())
                .filter_map(|e| e.file_name().to_str().map(String::from))
                .collect()
        })
        .unwrap_or_default();
    ids.sort();
    match ids.as_slice() {
        [one] => Ok(one.clone()),
        [] => Err(CliError::new("UnknownCampaign", format!("no campaign config under {}", dir.display()))),
        many => Err(CliError::new(
            "AmbiguousCampaign",
            format!("{} campaigns under {}; pass --campaign", many.len(), dir.display()),
        )),
    }
}

pub fn open(root: &Path, campaign: &str) -> Result<(Store, CampaignState)> {
    if !Store::campaign_dir(root, campaign).join("campaign.json").exists() {
        return Err(CliError::new("UnknownCampaign", format!("no campaign {campaign}")));
    }
    Store::open(root, campaign).map_err(|e| match e {
        StoreError::NotFound(p) => CliError::new("UnknownCampaign", format!("missing {p}")),
        other => other.into(),
    })
}

pub fn load(root: &Path, campaign: &str) -> Result<CampaignState> {
    open(root, campaign).map(|(_, s)| s)
}

/// Campaign that holds `cid`, searching every campaign when none is named.
pub fn find_candidate(root: &Path, campaign: Option<&str>, cid: &str) -> Result<(String, CampaignState)> {
    let ids = match campaign {
        Some(c) => vec![c.to_string()],
        None => Store::list(root),
    };
    for id in ids {
        let state = load(root, &id)?;
        if state.candidates.contains_key(cid) {
            return Ok((id, state));
        }
    }
    Err(CliError::new("UnknownCandidate", format!("unknown candidate {cid}")))
}

/// Latest timestamp anywhere in the campaign, so a resumed logical clock
/// keeps counting upward.
pub fn last_timestamp(state: &CampaignState) -> u64 {
    let events = state.candidates.values().flat_map(|c| c.history.iter().map(|e| e.timestamp));
    let notes = state.notifications.iter().map(|n| n.timestamp);
    let overrides = state.overrides.iter().map(|o| o.timestamp);
    events.chain(notes).chain(overrides).max().unwrap_or(0)
}

/// Apply and persist one override. Both the CLI and `POST /overrides` land here.
/// The override is stamped one tick after the campaign's latest record, so a
/// resumed logical clock stays ordered and replays stay reproducible.
pub fn submit_override(root: &Path, campaign: Option<&str>, request: OverrideRequest) -> Result<(String, OverrideRecord)> {
    let (id, _) = find_candidate(root, campaign, &request.candidate_id)?;
    let (mut store, mut state) = open(root, &id)?;
    let timestamp = last_timestamp(&state) + 1;
    let record = apply_override(&mut state, request, timestamp)?;
    store.sync(&state)?;
    Ok((id, record))
}

#[derive(Debug, Serialize)]
pub struct CampaignSummary {
    pub campaign_id: String,
    pub finished: bool,
    pub wave: u32,
    pub candidates: usize,
    pub disclosure_ready: usize,
    pub killed: usize,
    pub in_flight: usize,
    pub parked: usize,
    pub deferred: usize,
}

pub fn summary(state: &CampaignState) -> CampaignSummary {
    use gauntlet_core::LifecycleState as S;
    let count = |f: &dyn Fn(&S) -> bool| state.candidates.values().filter(|c| f(&c.state)).count();
    CampaignSummary {
        campaign_id: state.campaign_id().to_string(),
        finished: state.meta.finished,
        wave: state.meta.wave,
        candidates: state.candidates.len(),
        disclosure_ready: count(&|s| *s == S::DisclosureReady),
        killed: count(&|s| matches!(s, S::Killed { .. })),
        in_flight: count(&|s| !s.is_terminal()),
        parked: state.meta.parked.len(),
        deferred: state.meta.deferred.len(),
    }
}
