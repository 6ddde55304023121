//! JSON-over-HTTP facade for parcel registration, tracking, classification
//! reports and bin occupancy.
//!
//! | method | path | success |
//! |--------|------|---------|
//! | POST | `/api/v1/parcels` | 201 `{"id": ...}` |
//! | GET | `/api/v1/parcels/{id}/track` | 200 track JSON |
//! | POST | `/api/v1/parcels/{id}/checkpoints` | 200 track JSON |
//! | GET | `/api/v1/report/classification` | 200 rounded report JSON |
//! | GET | `/api/v1/bins` | 200 occupancy JSON |
//!
//! Every error body is `{"code": ..., "message": ...}` with status 400, 404
//! or 409.

use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use parcel_core::metrics::{classification_report, from_pairs, infer_classes, ConfusionMatrix};
use parcel_core::model::{validate_label, RawLabel, SimEvent, ZoneSet};
use parcel_core::sim::{occupancy, xray_pairs, Occupancy};
use parcel_core::tracking::{Checkpoint, TrackError, TrackState, TrackingStore};
use parcel_core::Report;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub fields: Vec<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            fields: Vec::new(),
        }
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NOT_FOUND", message)
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "BAD_REQUEST", message)
    }

    pub fn validation(fields: Vec<String>) -> Self {
        ApiError {
            message: fields.join("; "),
            fields,
            ..Self::new(StatusCode::BAD_REQUEST, "VALIDATION", "")
        }
    }

    pub fn duplicate(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, "DUPLICATE", message)
    }
}

impl From<TrackError> for ApiError {
    fn from(e: TrackError) -> Self {
        match e {
            TrackError::UnknownParcel(_) => ApiError::not_found(e.to_string()),
            TrackError::DuplicateParcel(_) => ApiError::duplicate(e.to_string()),
            TrackError::EmptyRoute | TrackError::InvalidRoute(_) => ApiError::validation(vec![e.to_string()]),
            _ => ApiError::bad_request(e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

/// Shared handler state. Simulation-derived data is fixed at startup.
#[derive(Clone)]
pub struct AppState {
    pub store: Arc<TrackingStore>,
    pub zones: Arc<ZoneSet>,
    pub matrix: Option<Arc<ConfusionMatrix>>,
    pub occupancy: Option<Arc<Occupancy>>,
}

impl AppState {
    pub fn new(store: TrackingStore, zones: ZoneSet) -> Self {
        AppState {
            store: Arc::new(store),
            zones: Arc::new(zones),
            matrix: None,
            occupancy: None,
        }
    }

    /// Loads bin occupancy and X-ray `(truth, predicted)` pairs from a simulation log.
    pub fn with_sim_log(mut self, events: &[SimEvent]) -> Self {
        self.occupancy = Some(Arc::new(occupancy(events)));
        let pairs = xray_pairs(events);
        if !pairs.is_empty() {
            self = self.with_pairs(&pairs);
        }
        self
    }

    /// Loads `(truth, predicted)` pairs for the classification report.
    pub fn with_pairs(mut self, pairs: &[(String, String)]) -> Self {
        let classes = infer_classes(pairs);
        self.matrix = from_pairs(pairs.iter().map(|(t, p)| (t, p)), &classes)
            .ok()
            .map(Arc::new);
        self
    }

    pub fn with_matrix(mut self, m: ConfusionMatrix) -> Self {
        self.matrix = Some(Arc::new(m));
        self
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/v1/parcels", post(register_parcel))
        .route("/api/v1/parcels/{id}/track", get(track))
        .route("/api/v1/parcels/{id}/checkpoints", post(record_checkpoint))
        .route("/api/v1/report/classification", get(classification))
        .route("/api/v1/bins", get(bins))
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .method_not_allowed_fallback(|| async { ApiError::bad_request("method not allowed on this endpoint") })
        .with_state(state)
}

/// Serves the API until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

fn now_s() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn parse_object(body: &[u8]) -> Result<Map<String, Value>, ApiError> {
    match serde_json::from_slice::<Value>(body) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(ApiError::bad_request("body must be a JSON object")),
        Err(e) => Err(ApiError::bad_request(format!("malformed JSON: {e}"))),
    }
}

fn field<T: for<'de> Deserialize<'de>>(
    map: &Map<String, Value>,
    name: &str,
    expected: &str,
    problems: &mut Vec<String>,
) -> Option<T> {
    match map.get(name) {
        None | Some(Value::Null) => None,
        Some(v) => match T::deserialize(v) {
            Ok(t) => Some(t),
            Err(_) => {
                problems.push(format!("{name} must be {expected}"));
                None
            }
        },
    }
}

fn optional_ts(map: &Map<String, Value>) -> Result<f64, ApiError> {
    match map.get("ts") {
        None | Some(Value::Null) => Ok(now_s()),
        Some(v) => v.as_f64().ok_or_else(|| ApiError::bad_request("ts must be a number")),
    }
}

#[derive(Serialize)]
struct TrackView<'a> {
    parcel_id: &'a str,
    status: parcel_core::tracking::TrackStatus,
    reached: &'a [parcel_core::tracking::Reached],
    remaining: Vec<&'a str>,
    route: &'a [Checkpoint],
    registered_ts: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    dumped_ts: Option<f64>,
}

/// The track JSON for one parcel state.
pub fn track_json(s: &TrackState) -> Value {
    serde_json::to_value(TrackView {
        parcel_id: &s.parcel_id,
        status: s.status,
        reached: &s.reached,
        remaining: s.remaining().map(|c| c.name.as_str()).collect(),
        route: &s.route,
        registered_ts: s.registered_ts,
        dumped_ts: s.dumped_ts,
    })
    .expect("track view serializes")
}

async fn register_parcel(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let map = parse_object(&body)?;
    let mut problems = Vec::new();
    let raw = RawLabel {
        id: field(&map, "id", "a string", &mut problems),
        weight_g: field(&map, "weight_g", "an integer", &mut problems),
        dims_mm: field(&map, "dims_mm", "a list of integers", &mut problems),
        zone: field(&map, "zone", "a string", &mut problems),
        nature: field(&map, "nature", "a string", &mut problems),
        fragility: field(&map, "fragility", "a string", &mut problems),
        address: field(&map, "address", "a string", &mut problems),
    };
    let route: Option<Vec<Checkpoint>> = field(&map, "route", "a list of {name, lat, lon}", &mut problems);
    let ts = optional_ts(&map)?;
    let label = match validate_label(&raw, &state.zones) {
        Ok(label) if problems.is_empty() => label,
        Ok(_) => return Err(ApiError::validation(problems)),
        Err(errs) => {
            // A mistyped field is reported once, not again as missing.
            let mistyped: Vec<String> = problems
                .iter()
                .filter_map(|p| p.split(' ').next())
                .map(String::from)
                .collect();
            problems.extend(
                errs.0
                    .into_iter()
                    .filter(|e| !mistyped.iter().any(|f| e.starts_with(f.as_str()))),
            );
            return Err(ApiError::validation(problems));
        }
    };
    let route = route.unwrap_or_else(|| vec![Checkpoint::new(format!("DEST:{}", label.zone), 0.0, 0.0)]);
    state.store.register_route(&label.id, route, ts)?;
    Ok((StatusCode::CREATED, Json(json!({ "id": label.id }))).into_response())
}

async fn track(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let s = state.store.query_track(&id)?;
    Ok(Json(track_json(&s)))
}

async fn record_checkpoint(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let map = parse_object(&body)?;
    let name = map
        .get("name")
        .and_then(Value::as_str)
        .ok_or_else(|| ApiError::validation(vec!["name missing".into()]))?;
    let ts = optional_ts(&map)?;
    let s = state.store.record_checkpoint(&id, name, ts)?;
    Ok(Json(track_json(&s)))
}

/// The rounded classification report served by the API, in field order.
pub fn rounded_report(m: &ConfusionMatrix) -> Option<Report> {
    classification_report::<f64>(m).ok().map(|r| r.rounded())
}

async fn classification(State(state): State<AppState>) -> Result<Json<Report>, ApiError> {
    state
        .matrix
        .as_deref()
        .and_then(rounded_report)
        .map(Json)
        .ok_or_else(|| ApiError::not_found("no classification data loaded"))
}

/// The occupancy JSON: `{"bins": {...}, "dumped": n, "injected": n}`.
pub fn bins_json(o: &Occupancy) -> Value {
    json!({ "bins": o.bins, "dumped": o.dumped, "injected": o.injected })
}

async fn bins(State(state): State<AppState>) -> Result<Json<Value>, ApiError> {
    state
        .occupancy
        .as_deref()
        .map(|o| Json(bins_json(o)))
        .ok_or_else(|| ApiError::not_found("no simulation log loaded"))
}
