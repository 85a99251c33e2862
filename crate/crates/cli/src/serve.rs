//! HTTP API and server-sent event stream for the operator console.
//!
//! Every JSON body carries `"schema": "gauntlet/v1"`. Reads go straight to
//! the stores under the root; writes are serialized through one lock.

use std::collections::{BTreeMap, VecDeque};
use std::convert::Infallible;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use gauntlet_core::metrics;
use gauntlet_core::overrides::OverrideRequest;
use gauntlet_core::state::Notification;
use gauntlet_core::store::{import_jsonl, Store};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::Mutex;

use crate::campaign;
use crate::commands::AuditReport;
use crate::error::{CliError, Result};

pub const SCHEMA: &str = "gauntlet/v1";
const POLL: Duration = Duration::from_millis(200);

struct App {
    root: PathBuf,
    writes: Mutex<()>,
}

type Shared = Arc<App>;

pub fn router(root: PathBuf) -> Router {
    let app = Arc::new(App {
        root,
        writes: Mutex::new(()),
    });
    Router::new()
        .route("/", get(index))
        .route("/campaigns", get(campaigns))
        .route("/campaigns/{id}/funnel", get(funnel))
        .route("/candidates/{cid}", get(candidate))
        .route("/audit", get(audit))
        .route("/overrides", post(overrides))
        .route("/events", get(events))
        .with_state(app)
}

pub fn serve(root: PathBuf, addr: &str) -> Result<()> {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, router(root)).await?;
        Ok(())
    })
}

struct ApiError(CliError);

impl From<CliError> for ApiError {
    fn from(e: CliError) -> Self {
        ApiError(e)
    }
}

fn status_for(code: &str) -> StatusCode {
    match code {
        "NotKilled" | "IllegalTransition" | "NoSeverityYet" | "CampaignExists" => StatusCode::CONFLICT,
        "UnknownCampaign" | "UnknownCandidate" | "NotFound" => StatusCode::NOT_FOUND,
        "EmptyJustification" | "MalformedRequest" | "MalformedVector" | "AmbiguousCampaign" => StatusCode::BAD_REQUEST,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "schema": SCHEMA, "error": { "code": self.0.code, "message": self.0.message } });
        (status_for(&self.0.code), Json(body)).into_response()
    }
}

type ApiResult = std::result::Result<Json<Value>, ApiError>;

fn ok(mut body: Value) -> ApiResult {
    body["schema"] = json!(SCHEMA);
    Ok(Json(body))
}

/// Blocking store reads run off the async workers.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T> + Send + 'static) -> std::result::Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| CliError::new("Internal", e.to_string()))?
        .map_err(ApiError)
}

async fn index() -> ApiResult {
    ok(json!({
        "service": "gauntlet",
        "version": env!("CARGO_PKG_VERSION"),
        "endpoints": [
            "GET /campaigns",
            "GET /campaigns/{id}/funnel",
            "GET /candidates/{cid}?campaign=",
            "GET /audit?campaign=",
            "POST /overrides",
            "GET /events?campaign=&since="
        ]
    }))
}

async fn campaigns(State(app): State<Shared>) -> ApiResult {
    let list = blocking(move || {
        Store::list(&app.root)
            .into_iter()
            .map(|id| campaign::load(&app.root, &id).map(|s| campaign::summary(&s)))
            .collect::<Result<Vec<_>>>()
    })
    .await?;
    ok(json!({ "campaigns": list }))
}

async fn funnel(State(app): State<Shared>, axum::extract::Path(id): axum::extract::Path<String>) -> ApiResult {
    let (summary, report) = blocking(move || {
        let state = campaign::load(&app.root, &id)?;
        Ok((campaign::summary(&state), metrics::funnel(&state)))
    })
    .await?;
    ok(json!({ "summary": summary, "funnel": report }))
}

#[derive(Deserialize)]
struct CampaignQuery {
    campaign: Option<String>,
}

async fn candidate(
    State(app): State<Shared>,
    axum::extract::Path(cid): axum::extract::Path<String>,
    Query(q): Query<CampaignQuery>,
) -> ApiResult {
    let body = blocking(move || {
        let (id, state) = campaign::find_candidate(&app.root, q.campaign.as_deref(), &cid)?;
        let c = &state.candidates[&cid];
        let exposures: Vec<_> = state.exposures.iter().filter(|e| e.candidate_id == cid).collect();
        let decisions: Vec<_> = state.decisions_for(&cid).collect();
        let validations: Vec<_> = state.validations.iter().filter(|v| v.candidate_id == cid).collect();
        let overrides: Vec<_> = state.overrides.iter().filter(|o| o.candidate_id == cid).collect();
        Ok(json!({
            "campaign_id": id,
            "candidate_id": cid,
            "state": c.state,
            "state_label": c.state.label(),
            "flags": c.flags,
            "claim": c.claim,
            "origin": c.origin,
            "target_ref": c.target_ref,
            "history": c.history,
            "verdicts": state.verdicts_for(&cid),
            "decisions": decisions,
            "validations": validations,
            "exposures": exposures,
            "overrides": overrides,
        }))
    })
    .await?;
    ok(body)
}

async fn audit(State(app): State<Shared>, Query(q): Query<CampaignQuery>) -> ApiResult {
    let reports = blocking(move || {
        let ids = match q.campaign {
            Some(c) => vec![c],
            None => Store::list(&app.root),
        };
        ids.iter()
            .map(|id| {
                let r = AuditReport::of(&campaign::load(&app.root, id)?);
                let clean = r.clean();
                Ok(json!({ "clean": clean, "report": r }))
            })
            .collect::<Result<Vec<_>>>()
    })
    .await?;
    ok(json!({ "audits": reports }))
}

#[derive(Deserialize)]
struct OverrideBody {
    #[serde(default)]
    campaign_id: Option<String>,
    #[serde(flatten)]
    request: OverrideRequest,
}

async fn overrides(State(app): State<Shared>, body: Bytes) -> ApiResult {
    let body: OverrideBody = serde_json::from_slice(&body)
        .map_err(|e| CliError::new("MalformedRequest", e.to_string()))?;
    let guard = app.clone();
    let _lock = guard.writes.lock().await;
    let (id, record) = blocking(move || {
        campaign::submit_override(&app.root, body.campaign_id.as_deref(), body.request)
    })
    .await?;
    let state = blocking({
        let root = guard.root.clone();
        let cid = record.candidate_id.clone();
        let id = id.clone();
        move || Ok(campaign::load(&root, &id)?.candidates[&cid].state.clone())
    })
    .await?;
    ok(json!({ "campaign_id": id, "override": record, "state": state, "state_label": state.label() }))
}

#[derive(Deserialize)]
struct EventsQuery {
    campaign: Option<String>,
    /// Skip notifications with `seq` at or below this, per campaign.
    #[serde(default)]
    since: Option<u64>,
}

/// Notifications from `notifications.log` past `after`, reading only
/// complete lines so a concurrent writer never yields a torn record.
fn read_notifications(root: &Path, campaign_id: &str, after: Option<u64>) -> Vec<Notification> {
    let path = Store::campaign_dir(root, campaign_id).join("notifications.log");
    let Ok(text) = std::fs::read_to_string(&path) else {
        return Vec::new();
    };
    let complete = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => return Vec::new(),
    };
    complete
        .lines()
        .filter_map(|l| import_jsonl::<Notification>(l, "notifications").ok())
        .flatten()
        .filter(|n| after.is_none_or(|a| n.seq > a))
        .collect()
}

fn kind_name(n: &Notification) -> String {
    serde_json::to_value(n.kind)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_else(|| "notification".into())
}

struct Cursor {
    root: PathBuf,
    campaign: Option<String>,
    seen: BTreeMap<String, Option<u64>>,
    since: Option<u64>,
    pending: VecDeque<(String, Notification)>,
}

impl Cursor {
    fn poll(&mut self) {
        let ids = match &self.campaign {
            Some(c) => vec![c.clone()],
            None => Store::list(&self.root),
        };
        for id in ids {
            let after = *self.seen.entry(id.clone()).or_insert(self.since);
            let fresh = read_notifications(&self.root, &id, after);
            if let Some(last) = fresh.last() {
                self.seen.insert(id.clone(), Some(last.seq));
            }
            self.pending.extend(fresh.into_iter().map(|n| (id.clone(), n)));
        }
    }
}

async fn events(
    State(app): State<Shared>,
    Query(q): Query<EventsQuery>,
) -> Sse<impl Stream<Item = std::result::Result<Event, Infallible>>> {
    let cursor = Cursor {
        root: app.root.clone(),
        campaign: q.campaign,
        seen: BTreeMap::new(),
        since: q.since,
        pending: VecDeque::new(),
    };
    let stream = futures::stream::unfold(cursor, |mut cursor| async move {
        loop {
            if let Some((id, n)) = cursor.pending.pop_front() {
                let data = json!({ "schema": SCHEMA, "campaign_id": id, "notification": n });
                let event = Event::default()
                    .event(kind_name(&n))
                    .id(format!("{id}:{}", n.seq))
                    .data(data.to_string());
                return Some((Ok(event), cursor));
            }
            cursor = tokio::task::spawn_blocking(move || {
                cursor.poll();
                cursor
            })
            .await
            .ok()?;
            if cursor.pending.is_empty() {
                tokio::time::sleep(POLL).await;
            }
        }
    });
    Sse::new(stream).keep_alive(KeepAlive::default())
}
