//! On-disk campaign layout.
//!
//! ```text
//! campaign/<id>/campaign.json                 meta, prepared target, candidate order
//! campaign/<id>/candidates/<cid>/events.log   one event per line
//! campaign/<id>/candidates/<cid>/snapshot     header and cached state
//! campaign/<id>/candidates/<cid>/transcripts/ dispatch and check transcripts
//! campaign/<id>/<ledger>.log                  exposure, views, verdicts, decisions, ...
//! ```
//!
//! Every line and the snapshot share one envelope,
//! `{"v":1,"digest":<sha256 of the record's JSON>,"record":{...}}`, so a
//! flipped byte surfaces as `CorruptRecord` on load.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::candidate::{Candidate, CandidateHeader, Event};
use crate::context::{ExposureRecord, Fragment, PreparedTarget};
use crate::state::{CampaignMeta, CampaignState, IntakeRecord};
use crate::util::canonical_digest;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StoreError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("corrupt record in {path} line {line}: {reason}")]
    CorruptRecord { path: String, line: usize, reason: String },
    #[error("io error on {path}: {reason}")]
    Io { path: String, reason: String },
}

impl StoreError {
    pub fn code(&self) -> &'static str {
        match self {
            StoreError::NotFound(_) => "NotFound",
            StoreError::CorruptRecord { .. } => "CorruptRecord",
            StoreError::Io { .. } => "Io",
        }
    }
}

fn io(path: &Path, e: std::io::Error) -> StoreError {
    if e.kind() == std::io::ErrorKind::NotFound {
        StoreError::NotFound(path.display().to_string())
    } else {
        StoreError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        }
    }
}

#[derive(Serialize)]
struct EnvelopeOut<'a, T> {
    v: u32,
    digest: String,
    record: &'a T,
}

#[derive(Deserialize)]
struct EnvelopeIn<T> {
    v: u32,
    digest: String,
    record: T,
}

/// One enveloped record, without a trailing newline.
pub fn encode<T: Serialize>(record: &T) -> String {
    serde_json::to_string(&EnvelopeOut {
        v: SCHEMA_VERSION,
        digest: canonical_digest(record),
        record,
    })
    .expect("records serialize")
}

fn decode<T: Serialize + DeserializeOwned>(text: &str, path: &str, line: usize) -> Result<T, StoreError> {
    let corrupt = |reason: String| StoreError::CorruptRecord {
        path: path.to_string(),
        line,
        reason,
    };
    let env: EnvelopeIn<T> = serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
    if env.v != SCHEMA_VERSION {
        return Err(corrupt(format!("schema version {}", env.v)));
    }
    if canonical_digest(&env.record) != env.digest {
        return Err(corrupt("digest mismatch".into()));
    }
    Ok(env.record)
}

/// Encode records as enveloped JSON lines.
pub fn export_jsonl<T: Serialize>(records: &[T]) -> String {
    records.iter().map(|r| encode(r) + "\n").collect()
}

/// Parse enveloped JSON lines; blank lines are skipped.
pub fn import_jsonl<T: Serialize + DeserializeOwned>(text: &str, source: &str) -> Result<Vec<T>, StoreError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| decode(l, source, i + 1))
        .collect()
}

/// A state holding only the given candidates, each re-derived from its
/// history. Used for fixture logs.
pub fn state_from_candidates(meta: CampaignMeta, candidates: Vec<Candidate>) -> Result<CampaignState, StoreError> {
    let mut state = CampaignState::new(meta);
    for (i, c) in candidates.into_iter().enumerate() {
        let replayed = Candidate::replay(c.header(), &c.history).map_err(|e| StoreError::CorruptRecord {
            path: "candidates".into(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        if replayed != c {
            return Err(StoreError::CorruptRecord {
                path: "candidates".into(),
                line: i + 1,
                reason: format!("{} state differs from its history", c.id),
            });
        }
        state.order.push(c.id.clone());
        state.candidates.insert(c.id.clone(), c);
    }
    Ok(state)
}

/// Load a candidate log (one enveloped candidate per line, as written by
/// [`export_jsonl`]). The campaign id is the file stem.
pub fn load_candidate_log(path: &Path) -> Result<CampaignState, StoreError> {
    let text = fs::read_to_string(path).map_err(|e| io(path, e))?;
    let candidates: Vec<Candidate> = import_jsonl(&text, &path.display().to_string())?;
    let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("log");
    state_from_candidates(CampaignMeta::new(id, 0, Default::default()), candidates)
}

#[derive(Serialize, Deserialize)]
struct CampaignFile {
    v: u32,
    meta: CampaignMeta,
    prepared: Option<PreparedTarget>,
    order: Vec<String>,
}

#[derive(Serialize, Deserialize, Clone, PartialEq)]
struct ViewRecord {
    content_digest: String,
    content: Vec<Fragment>,
}

#[derive(Default)]
struct Cursors {
    events: HashMap<String, usize>,
    views: BTreeSet<String>,
    transcripts: BTreeSet<String>,
    ledgers: HashMap<&'static str, usize>,
}

pub struct Store {
    dir: PathBuf,
    cursors: Cursors,
}

fn write_atomic(path: &Path, text: &str) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text).map_err(|e| io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io(path, e))
}

fn append(path: &Path, text: &str) -> Result<(), StoreError> {
    if text.is_empty() {
        return Ok(());
    }
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| io(path, e))
}

fn read_log<T: Serialize + DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    match fs::read_to_string(path) {
        Ok(text) => import_jsonl(&text, &path.display().to_string()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(vec![]),
        Err(e) => Err(io(path, e)),
    }
}

const LEDGERS: [&str; 11] = [
    "exposure",
    "verdicts",
    "decisions",
    "validations",
    "refusals",
    "notifications",
    "overrides",
    "rules",
    "escalations",
    "intake",
    "intake_rejections",
];

impl Store {
    pub fn campaign_dir(root: &Path, campaign_id: &str) -> PathBuf {
        root.join("campaign").join(campaign_id)
    }

    /// Open a campaign directory for writing, creating it if needed.
    pub fn create(root: &Path, campaign_id: &str) -> Result<Self, StoreError> {
        let dir = Self::campaign_dir(root, campaign_id);
        fs::create_dir_all(dir.join("candidates")).map_err(|e| io(&dir, e))?;
        Ok(Self {
            dir,
            cursors: Cursors::default(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Campaign ids under `root`, sorted.
    pub fn list(root: &Path) -> Vec<String> {
        let mut out: Vec<String> = fs::read_dir(root.join("campaign"))
            .map(|rd| {
                rd.filter_map(|e| e.ok())
                    .filter(|e| e.path().join("campaign.json").exists())
                    .filter_map(|e| e.file_name().into_string().ok())
                    .collect()
            })
            .unwrap_or_default();
        out.sort();
        out
    }

    fn candidate_dir(&self, cid: &str) -> PathBuf {
        self.dir.join("candidates").join(cid)
    }

    fn ledger_path(&self, name: &str) -> PathBuf {
        self.dir.join(format!("{name}.log"))
    }

    /// Write a candidate's full history and snapshot, replacing what is there.
    pub fn persist(&self, candidate: &Candidate) -> Result<(), StoreError> {
        let dir = self.candidate_dir(&candidate.id);
        fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
        write_atomic(&dir.join("events.log"), &export_jsonl(&candidate.history))?;
        write_atomic(&dir.join("snapshot"), &(encode(candidate) + "\n"))
    }

    /// Rebuild a candidate from its event log. The snapshot supplies the
    /// header and must agree with the replay.
    pub fn load(&self, cid: &str) -> Result<Candidate, StoreError> {
        let dir = self.candidate_dir(cid);
        let snap_path = dir.join("snapshot");
        let snap_text = fs::read_to_string(&snap_path).map_err(|e| io(&snap_path, e))?;
        let snapshot: Candidate = decode(snap_text.trim_end(), &snap_path.display().to_string(), 1)?;
        let log_path = dir.join("events.log");
        let text = fs::read_to_string(&log_path).map_err(|e| io(&log_path, e))?;
        let events: Vec<Event> = import_jsonl(&text, &log_path.display().to_string())?;
        let header: CandidateHeader = snapshot.header();
        let replayed = Candidate::replay(header, &events).map_err(|e| StoreError::CorruptRecord {
            path: log_path.display().to_string(),
            line: 0,
            reason: e.to_string(),
        })?;
        if replayed != snapshot {
            return Err(StoreError::CorruptRecord {
                path: snap_path.display().to_string(),
                line: 1,
                reason: "snapshot disagrees with event log".into(),
            });
        }
        Ok(replayed)
    }

    fn sync_ledger<T: Serialize>(&mut self, name: &'static str, records: &[T]) -> Result<(), StoreError> {
        let done = self.cursors.ledgers.get(name).copied().unwrap_or(0);
        if records.len() > done {
            append(&self.ledger_path(name), &export_jsonl(&records[done..]))?;
            self.cursors.ledgers.insert(name, records.len());
        }
        Ok(())
    }

    /// Append everything recorded since the last sync.
    pub fn sync(&mut self, state: &CampaignState) -> Result<(), StoreError> {
        for cid in &state.order {
            let c = &state.candidates[cid];
            let done = self.cursors.events.get(cid).copied().unwrap_or(0);
            if c.history.len() == done {
                continue;
            }
            let dir = self.candidate_dir(cid);
            fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
            append(&dir.join("events.log"), &export_jsonl(&c.history[done..]))?;
            write_atomic(&dir.join("snapshot"), &(encode(c) + "\n"))?;
            self.cursors.events.insert(cid.clone(), c.history.len());
        }
        let new_views: Vec<ViewRecord> = state
            .views
            .iter()
            .filter(|(d, _)| !self.cursors.views.contains(*d))
            .map(|(d, content)| ViewRecord {
                content_digest: d.clone(),
                content: content.clone(),
            })
            .collect();
        append(&self.ledger_path("views"), &export_jsonl(&new_views))?;
        self.cursors.views.extend(new_views.into_iter().map(|v| v.content_digest));
        for (tref, body) in &state.transcripts {
            if self.cursors.transcripts.contains(tref) {
                continue;
            }
            let path = self.transcript_path(tref);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
            }
            fs::write(&path, body).map_err(|e| io(&path, e))?;
            self.cursors.transcripts.insert(tref.clone());
        }
        self.sync_ledger("exposure", &state.exposures)?;
        self.sync_ledger("verdicts", &state.verdicts)?;
        self.sync_ledger("decisions", &state.decisions)?;
        self.sync_ledger("validations", &state.validations)?;
        self.sync_ledger("refusals", &state.refusals)?;
        self.sync_ledger("notifications", &state.notifications)?;
        self.sync_ledger("overrides", &state.overrides)?;
        self.sync_ledger("rules", &state.rules)?;
        self.sync_ledger("escalations", &state.escalations)?;
        let intake: Vec<&IntakeRecord> = state.order.iter().filter_map(|c| state.intake.get(c)).collect();
        self.sync_ledger("intake", &intake)?;
        self.sync_ledger("intake_rejections", &state.intake_rejections)?;
        let file = CampaignFile {
            v: SCHEMA_VERSION,
            meta: state.meta.clone(),
            prepared: state.prepared.clone(),
            order: state.order.clone(),
        };
        write_atomic(
            &self.dir.join("campaign.json"),
            &(serde_json::to_string_pretty(&file).expect("serializes") + "\n"),
        )
    }

    /// Transcripts live under the candidate they belong to; campaign-level
    /// ones (prepare, hunting) under `transcripts/`.
    pub fn transcript_path(&self, tref: &str) -> PathBuf {
        let safe: Vec<&str> = tref.split('/').filter(|p| !p.is_empty() && *p != "..").collect();
        match safe.split_first() {
            Some((cid, rest)) if !rest.is_empty() && self.candidate_dir(cid).exists() => self
                .candidate_dir(cid)
                .join("transcripts")
                .join(format!("{}.txt", rest.join("/"))),
            _ => self.dir.join("transcripts").join(format!("{}.txt", safe.join("/"))),
        }
    }

    pub fn read_transcript(&self, tref: &str) -> Result<String, StoreError> {
        let path = self.transcript_path(tref);
        fs::read_to_string(&path).map_err(|e| io(&path, e))
    }

    /// Load a whole campaign and a store positioned to append to it.
    pub fn open(root: &Path, campaign_id: &str) -> Result<(Self, CampaignState), StoreError> {
        let dir = Self::campaign_dir(root, campaign_id);
        let meta_path = dir.join("campaign.json");
        let text = fs::read_to_string(&meta_path).map_err(|e| io(&meta_path, e))?;
        let file: CampaignFile = serde_json::from_str(&text).map_err(|e| StoreError::CorruptRecord {
            path: meta_path.display().to_string(),
            line: e.line(),
            reason: e.to_string(),
        })?;
        let mut store = Self {
            dir,
            cursors: Cursors::default(),
        };
        let mut state = CampaignState::new(file.meta);
        state.prepared = file.prepared;
        for cid in &file.order {
            let c = store.load(cid)?;
            store.cursors.events.insert(cid.clone(), c.history.len());
            state.order.push(cid.clone());
            state.candidates.insert(cid.clone(), c);
        }
        let views: Vec<ViewRecord> = read_log(&store.ledger_path("views"))?;
        for v in views {
            store.cursors.views.insert(v.content_digest.clone());
            state.views.insert(v.content_digest, v.content);
        }
        state.exposures = read_log::<ExposureRecord>(&store.ledger_path("exposure"))?;
        state.verdicts = read_log(&store.ledger_path("verdicts"))?;
        state.decisions = read_log(&store.ledger_path("decisions"))?;
        state.validations = read_log(&store.ledger_path("validations"))?;
        state.refusals = read_log(&store.ledger_path("refusals"))?;
        state.notifications = read_log(&store.ledger_path("notifications"))?;
        state.overrides = read_log(&store.ledger_path("overrides"))?;
        state.rules = read_log(&store.ledger_path("rules"))?;
        state.escalations = read_log(&store.ledger_path("escalations"))?;
        let intake: Vec<IntakeRecord> = read_log(&store.ledger_path("intake"))?;
        state.intake = intake.into_iter().map(|r| (r.candidate_id.clone(), r)).collect::<BTreeMap<_, _>>();
        state.intake_rejections = read_log(&store.ledger_path("intake_rejections"))?;
        state.rebuild_indexes();
        let lens = [
            state.exposures.len(),
            state.verdicts.len(),
            state.decisions.len(),
            state.validations.len(),
            state.refusals.len(),
            state.notifications.len(),
            state.overrides.len(),
            state.rules.len(),
            state.escalations.len(),
            state.intake.len(),
            state.intake_rejections.len(),
        ];
        for (name, n) in LEDGERS.iter().zip(lens) {
            store.cursors.ledgers.insert(name, n);
        }
        Ok((store, state))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::tests::sample_state;

    #[test]
    fn persist_then_load_round_trips() {
        let tmp = tempfile::tempdir().unwrap();
        let store = Store::create(tmp.path(), "t").unwrap();
        let state = sample_state();
        let c = &state.candidates["c1"];
        store.persist(c).unwrap();
        assert_eq!(&store.load("c1").unwrap(), c);
    }

    #[test]
    fn unknown_candidate_is_not_found() {
        let tmp = tempfile::tempdir().unwrap();
        let store = Store::create(tmp.path(), "t").unwrap();
        assert!(matches!(store.load("nope"), Err(StoreError::NotFound(_))));
    }

    #[test]
    fn flipped_byte_is_corrupt() {
        let tmp = tempfile::tempdir().unwrap();
        let store = Store::create(tmp.path(), "t").unwrap();
        let state = sample_state();
        store.persist(&state.candidates["c1"]).unwrap();
        let path = store.dir().join("candidates/c1/events.log");
        let mut bytes = fs::read(&path).unwrap();
        let i = bytes.iter().position(|&b| b == b'g').unwrap();
        bytes[i] = b'h';
        fs::write(&path, bytes).unwrap();
        let err = store.load("c1").unwrap_err();
        assert_eq!(err.code(), "CorruptRecord");
    }

    #[test]
    fn sync_and_open_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let mut store = Store::create(tmp.path(), "test").unwrap();
        let state = sample_state();
        store.sync(&state).unwrap();
        store.sync(&state).unwrap();
        let (_, loaded) = Store::open(tmp.path(), "test").unwrap();
        assert_eq!(loaded.candidates, state.candidates);
        assert_eq!(loaded.verdicts, state.verdicts);
        assert_eq!(loaded.verdict("v000002"), state.verdict("v000002"));
        assert_eq!(Store::list(tmp.path()), vec!["test".to_string()]);
    }
}
