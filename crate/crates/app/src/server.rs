//! Review API. Runs and graphs are loaded once and stay read-only; the label
//! store is the only mutable state and every review goes through its lock.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use misinfo_core::deploy::{CandidateScore, DeploymentRun};
use misinfo_core::features::extract_features;
use misinfo_core::labels::{EventLog, PersistentLabelStore, ReviewEvent, ReviewOutcome};
use misinfo_core::{CategoryRegistry, Domain, FeatureMode, FeatureSchema, LabelStore, NavigationGraph, Verdict};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::artifacts::{load_graphs, load_registry, load_runs};
use crate::error::AppError;

pub const DEFAULT_PAGE_SIZE: usize = 50;
pub const MAX_PAGE_SIZE: usize = 500;

pub struct AppState {
    pub runs: BTreeMap<String, DeploymentRun>,
    pub graphs: Vec<NavigationGraph>,
    pub registry: CategoryRegistry,
    pub labels: RwLock<PersistentLabelStore>,
}

pub struct ServeSources<'a> {
    pub runs_dir: &'a Path,
    pub graphs_dir: &'a Path,
    pub edge_threshold: u64,
    pub labels: &'a [PathBuf],
    pub registry: Option<&'a Path>,
    pub review_log: &'a Path,
}

impl AppState {
    pub fn load(src: &ServeSources<'_>) -> Result<Arc<Self>, AppError> {
        let runs = load_runs(src.runs_dir)?.into_iter().map(|(id, (_, run))| (id, run)).collect();
        Ok(Arc::new(AppState {
            runs,
            graphs: load_graphs(src.graphs_dir, src.edge_threshold)?,
            registry: load_registry(src.registry)?,
            labels: RwLock::new(PersistentLabelStore::open(src.labels, EventLog::new(src.review_log))?),
        }))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/runs", get(list_runs))
        .route("/runs/{id}/queue", get(queue))
        .route("/domains/{domain}", get(domain_detail))
        .route("/reviews", post(submit_review))
        .with_state(state)
}

struct ApiError {
    status: StatusCode,
    error: AppError,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError { status, error: AppError::new(code, message) }
    }

    fn not_found(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", message)
    }
}

impl From<AppError> for ApiError {
    fn from(error: AppError) -> Self {
        let status = match error.code.as_str() {
            "conflict" | "already_labeled" => StatusCode::CONFLICT,
            "invalid_domain" | "invalid_request" | "invalid_argument" => StatusCode::BAD_REQUEST,
            "not_found" => StatusCode::NOT_FOUND,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError { status, error }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.error }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn read_labels(state: &AppState) -> std::sync::RwLockReadGuard<'_, PersistentLabelStore> {
    // A panic while holding the lock cannot leave the store half-written:
    // the log append happens before the in-memory update.
    state.labels.read().unwrap_or_else(|e| e.into_inner())
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({ "status": "ok", "runs": state.runs.len(), "months": state.graphs.iter().map(|g| g.month()).collect::<Vec<_>>() }))
}

fn is_reviewed(store: &LabelStore, domain: &Domain) -> bool {
    store.review_verdict(domain.as_str()).is_some()
}

async fn list_runs(State(state): State<Arc<AppState>>) -> Json<Value> {
    let labels = read_labels(&state);
    let store = labels.store();
    let runs: Vec<Value> = state
        .runs
        .values()
        .map(|r| {
            json!({
                "id": r.id,
                "strategy": r.strategy.name(),
                "target_class": r.target_class,
                "created_at": r.created_at,
                "months": r.months,
                "candidates": r.candidates.len(),
                "positives": r.positives.len(),
                "reviewed": r.positives.iter().filter(|d| is_reviewed(store, d)).count(),
                "counts": r.counts,
            })
        })
        .collect();
    Json(json!({ "runs": runs }))
}

#[derive(Debug, Deserialize)]
struct PageQuery {
    page: Option<usize>,
    size: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct QueueItem {
    pub domain: Domain,
    pub months: Vec<MonthScore>,
    pub min_confidence: f64,
    pub predicted_class: String,
    pub status: &'static str,
    pub verdict: Option<Verdict>,
    pub reviewer: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct MonthScore {
    pub month: misinfo_core::Month,
    pub confidence: f64,
    pub present: bool,
}

fn queue_item(run: &DeploymentRun, c: &CandidateScore, store: &LabelStore) -> QueueItem {
    let latest: Option<&ReviewEvent> = store.events().iter().rev().find(|e| e.domain == c.domain);
    QueueItem {
        domain: c.domain.clone(),
        months: run
            .months
            .iter()
            .zip(c.confidences.iter().zip(&c.present))
            .map(|(&month, (&confidence, &present))| MonthScore { month, confidence, present })
            .collect(),
        min_confidence: c.min_confidence(),
        predicted_class: run.target_class.as_str().to_string(),
        status: if latest.is_some() { "reviewed" } else { "pending" },
        verdict: latest.map(|e| e.verdict),
        reviewer: latest.map(|e| e.reviewer.clone()),
    }
}

fn run_of<'a>(state: &'a AppState, id: &str) -> Result<&'a DeploymentRun, ApiError> {
    state.runs.get(id).ok_or_else(|| ApiError::not_found(format!("no run {id}")))
}

async fn queue(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<PageQuery>,
) -> ApiResult<Value> {
    let run = run_of(&state, &id)?;
    let page = q.page.unwrap_or(1);
    let size = q.size.unwrap_or(DEFAULT_PAGE_SIZE);
    if page == 0 || size == 0 || size > MAX_PAGE_SIZE {
        return Err(ApiError::bad_request(format!("page must be >= 1 and size in 1..={MAX_PAGE_SIZE}")));
    }
    let labels = read_labels(&state);
    let all = run.review_queue();
    let items: Vec<QueueItem> =
        all.iter().skip((page - 1) * size).take(size).map(|c| queue_item(run, c, labels.store())).collect();
    Ok(Json(json!({
        "run": run.id,
        "page": page,
        "size": size,
        "total": all.len(),
        "pages": all.len().div_ceil(size),
        "items": items,
    })))
}

#[derive(Debug, Deserialize)]
struct DomainQuery {
    mode: Option<FeatureMode>,
}

async fn domain_detail(
    State(state): State<Arc<AppState>>,
    UrlPath(raw): UrlPath<String>,
    Query(q): Query<DomainQuery>,
) -> ApiResult<Value> {
    let domain = Domain::parse(&raw).map_err(|e| ApiError::from(AppError::from(e)))?;
    let mode = q.mode.unwrap_or(FeatureMode::Binary);
    let columns = FeatureSchema::traffic(mode).columns;
    let labels = read_labels(&state);
    let store = labels.store();
    let describe = |d: &Domain| {
        json!({
            "class": store.class_of(d.as_str()).as_str(),
            "propaganda": store.is_propaganda(d.as_str()),
            "category": state.registry.category_of(d.as_str()).map(|c| c.as_str()),
        })
    };
    let mut months = Vec::new();
    for g in &state.graphs {
        if !g.contains(domain.as_str()) {
            continue;
        }
        let fv = extract_features(g, store, &state.registry, domain.as_str()).map_err(|e| ApiError::from(AppError::from(e)))?;
        let features: Vec<Value> =
            columns.iter().zip(fv.values(mode)).map(|(name, value)| json!({ "name": name, "value": value })).collect();
        let mut neighbors = Vec::new();
        let edges = |dir: &str, it: &mut dyn Iterator<Item = (&Domain, u64)>, out: &mut Vec<Value>| {
            for (d, w) in it {
                let mut v = describe(d);
                v["domain"] = json!(d);
                v["direction"] = json!(dir);
                v["weight"] = json!(w);
                out.push(v);
            }
        };
        let internal = |e| ApiError::from(AppError::from(e));
        edges("inbound", &mut g.predecessors(domain.as_str()).map_err(internal)?, &mut neighbors);
        edges("outbound", &mut g.successors(domain.as_str()).map_err(internal)?, &mut neighbors);
        months.push(json!({
            "month": g.month(),
            "inbound_total": fv.inbound_total,
            "outbound_total": fv.outbound_total,
            "features": features,
            "neighbors": neighbors,
        }));
    }
    if months.is_empty() {
        return Err(ApiError::not_found(format!("{domain} is in no month's graph")));
    }
    let mut body = describe(&domain);
    body["domain"] = json!(domain);
    body["mode"] = json!(mode);
    body["review"] = json!(store.review_verdict(domain.as_str()));
    body["months"] = Value::Array(months);
    Ok(Json(body))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReviewRequest {
    run: String,
    domain: String,
    verdict: Verdict,
    reviewer: String,
    #[serde(default)]
    checklist: Option<Vec<bool>>,
}

/// The body is parsed by hand so malformed JSON gets the same error shape as
/// every other failure.
async fn submit_review(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Value> {
    let req: ReviewRequest = serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let domain = Domain::parse(&req.domain).map_err(|e| ApiError::from(AppError::from(e)))?;
    if req.reviewer.trim().is_empty() {
        return Err(ApiError::bad_request("reviewer must not be empty"));
    }
    let run = run_of(&state, &req.run)?;
    let Some(candidate) = run.candidate(domain.as_str()).filter(|c| c.is_positive()) else {
        return Err(ApiError::not_found(format!("{domain} is not flagged by run {}", run.id)));
    };
    let event = ReviewEvent {
        domain: domain.clone(),
        verdict: req.verdict,
        reviewer: req.reviewer,
        timestamp: chrono::Utc::now(),
        run: Some(run.id.clone()),
        checklist: req.checklist,
    };
    let mut labels = state.labels.write().unwrap_or_else(|e| e.into_inner());
    let outcome = labels.add_review_label(event).map_err(|e| ApiError::from(AppError::from(e)))?;
    let item = queue_item(run, candidate, labels.store());
    Ok(Json(json!({
        "outcome": match outcome {
            ReviewOutcome::Recorded => "recorded",
            ReviewOutcome::Unchanged => "unchanged",
        },
        "item": item,
    })))
}
