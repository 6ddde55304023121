//! Checkpoint tracking backed by an append-only JSONL log.
//!
//! One writer at a time appends a line and then publishes a new immutable
//! snapshot; readers grab the current snapshot `Arc` and never wait on log
//! I/O. Replaying the log from the start rebuilds exactly the live state.
//!
//! Line schema:
//!
//! ```text
//! {"seq":0,"ts":12.5,"parcel":"ABC123DEF456","kind":"REGISTER","data":{"route":[{"name":"Jaipur","lat":26.9124,"lon":75.7873}]}}
//! {"seq":1,"ts":20.0,"parcel":"ABC123DEF456","kind":"CHECKPOINT","data":{"name":"Jaipur","lat":26.9124,"lon":75.7873}}
//! {"seq":2,"ts":31.0,"parcel":"ABC123DEF456","kind":"DUMPED","data":{}}
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrackError {
    #[error("DUPLICATE_PARCEL: {0} is already registered")]
    DuplicateParcel(String),
    #[error("EMPTY_ROUTE: a route needs at least one checkpoint")]
    EmptyRoute,
    #[error("INVALID_ROUTE: {0}")]
    InvalidRoute(String),
    #[error("UNKNOWN_PARCEL: {0}")]
    UnknownParcel(String),
    #[error("OUT_OF_ORDER: {0}")]
    OutOfOrder(String),
    #[error("STALE_TIMESTAMP: {ts} is not after {last}")]
    StaleTimestamp { ts: f64, last: f64 },
    #[error("CORRUPT_LINE: line {line}: {reason}")]
    CorruptLine {
        line: usize,
        reason: String,
        /// State rebuilt from the lines before the corrupt one.
        recovered: Box<StoreState>,
        /// Byte length of that valid prefix.
        valid_bytes: u64,
    },
    #[error("IO: {0}")]
    Io(#[from] std::io::Error),
}

impl TrackError {
    pub fn code(&self) -> &'static str {
        match self {
            TrackError::DuplicateParcel(_) => "DUPLICATE_PARCEL",
            TrackError::EmptyRoute => "EMPTY_ROUTE",
            TrackError::InvalidRoute(_) => "INVALID_ROUTE",
            TrackError::UnknownParcel(_) => "UNKNOWN_PARCEL",
            TrackError::OutOfOrder(_) => "OUT_OF_ORDER",
            TrackError::StaleTimestamp { .. } => "STALE_TIMESTAMP",
            TrackError::CorruptLine { .. } => "CORRUPT_LINE",
            TrackError::Io(_) => "IO",
        }
    }
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub name: String,
    pub lat: f64,
    pub lon: f64,
}

impl Checkpoint {
    /// Coordinates are kept at six decimal places.
    pub fn new(name: impl Into<String>, lat: f64, lon: f64) -> Self {
        Checkpoint {
            name: name.into(),
            lat: round6(lat),
            lon: round6(lon),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reached {
    pub name: String,
    pub lat: f64,
    pub lon: f64,
    pub ts: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TrackStatus {
    Registered,
    InTransit,
    Delivered,
    Dumped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackState {
    pub parcel_id: String,
    pub status: TrackStatus,
    pub route: Vec<Checkpoint>,
    pub reached: Vec<Reached>,
    pub registered_ts: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dumped_ts: Option<f64>,
}

impl TrackState {
    /// Route checkpoints not yet reached, in order.
    pub fn remaining(&self) -> impl Iterator<Item = &Checkpoint> {
        self.route[self.reached.len()..].iter()
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self.status, TrackStatus::Delivered | TrackStatus::Dumped)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TrackOp {
    Register { route: Vec<Checkpoint> },
    Checkpoint { name: String, lat: f64, lon: f64 },
    Dumped {},
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub seq: u64,
    pub ts: f64,
    pub parcel: String,
    #[serde(flatten)]
    pub op: TrackOp,
}

/// Everything the log determines: per-parcel state and the next seq.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StoreState {
    pub parcels: BTreeMap<String, Arc<TrackState>>,
    pub next_seq: u64,
}

fn check_ts(ts: f64) -> Result<(), TrackError> {
    if ts.is_finite() && ts >= 0.0 {
        Ok(())
    } else {
        Err(TrackError::StaleTimestamp { ts, last: 0.0 })
    }
}

fn check_route(route: &[Checkpoint]) -> Result<(), TrackError> {
    if route.is_empty() {
        return Err(TrackError::EmptyRoute);
    }
    let mut names = HashSet::new();
    for cp in route {
        if cp.name.is_empty() {
            return Err(TrackError::InvalidRoute("checkpoint name is empty".into()));
        }
        if !names.insert(cp.name.as_str()) {
            return Err(TrackError::InvalidRoute(format!(
                "checkpoint {:?} appears twice",
                cp.name
            )));
        }
        if !(-90.0..=90.0).contains(&cp.lat) || !(-180.0..=180.0).contains(&cp.lon) {
            return Err(TrackError::InvalidRoute(format!(
                "checkpoint {:?} has coordinates out of range",
                cp.name
            )));
        }
    }
    Ok(())
}

impl StoreState {
    /// Validates `op` against the current state and returns the new parcel state.
    fn transition(&self, parcel: &str, ts: f64, op: &TrackOp) -> Result<TrackState, TrackError> {
        check_ts(ts)?;
        match op {
            TrackOp::Register { route } => {
                if self.parcels.contains_key(parcel) {
                    return Err(TrackError::DuplicateParcel(parcel.to_string()));
                }
                check_route(route)?;
                Ok(TrackState {
                    parcel_id: parcel.to_string(),
                    status: TrackStatus::Registered,
                    route: route.clone(),
                    reached: Vec::new(),
                    registered_ts: ts,
                    dumped_ts: None,
                })
            }
            TrackOp::Checkpoint { name, lat, lon } => {
                let current = self
                    .parcels
                    .get(parcel)
                    .ok_or_else(|| TrackError::UnknownParcel(parcel.to_string()))?;
                if current.is_terminal() {
                    return Err(TrackError::OutOfOrder(format!(
                        "{parcel} is {:?}; no further checkpoints",
                        current.status
                    )));
                }
                let next = current
                    .remaining()
                    .next()
                    .expect("non-terminal parcel has a next checkpoint");
                if next.name != *name {
                    return Err(TrackError::OutOfOrder(format!(
                        "next checkpoint is {:?}, not {name:?}",
                        next.name
                    )));
                }
                if next.lat != *lat || next.lon != *lon {
                    return Err(TrackError::OutOfOrder(format!(
                        "coordinates of {name:?} do not match the route"
                    )));
                }
                if let Some(last) = current.reached.last() {
                    if ts <= last.ts {
                        return Err(TrackError::StaleTimestamp { ts, last: last.ts });
                    }
                }
                let mut state = (**current).clone();
                state.reached.push(Reached {
                    name: name.clone(),
                    lat: *lat,
                    lon: *lon,
                    ts,
                });
                state.status = if state.reached.len() == state.route.len() {
                    TrackStatus::Delivered
                } else {
                    TrackStatus::InTransit
                };
                Ok(state)
            }
            TrackOp::Dumped {} => {
                let current = self
                    .parcels
                    .get(parcel)
                    .ok_or_else(|| TrackError::UnknownParcel(parcel.to_string()))?;
                if current.is_terminal() {
                    return Err(TrackError::OutOfOrder(format!(
                        "{parcel} is already {:?}",
                        current.status
                    )));
                }
                let mut state = (**current).clone();
                state.status = TrackStatus::Dumped;
                state.dumped_ts = Some(ts);
                Ok(state)
            }
        }
    }

    fn apply(&mut self, record: &TrackRecord) -> Result<(), TrackError> {
        if record.seq != self.next_seq {
            return Err(TrackError::OutOfOrder(format!(
                "seq {} where {} was expected",
                record.seq, self.next_seq
            )));
        }
        let state = self.transition(&record.parcel, record.ts, &record.op)?;
        self.parcels.insert(record.parcel.clone(), Arc::new(state));
        self.next_seq += 1;
        Ok(())
    }
}

/// Rebuilds store state from a log stream.
///
/// Every line must be `\n`-terminated JSON that applies cleanly; the first
/// line that does not yields [`TrackError::CorruptLine`] carrying the state
/// of the valid prefix.
pub fn replay_from<R: Read>(input: R) -> Result<StoreState, TrackError> {
    let mut reader = BufReader::new(input);
    let mut state = StoreState::default();
    let mut buf = Vec::new();
    let mut valid_bytes = 0u64;
    let mut line_no = 0usize;
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf)?;
        if n == 0 {
            return Ok(state);
        }
        line_no += 1;
        let corrupt = |reason: String, state: StoreState| TrackError::CorruptLine {
            line: line_no,
            reason,
            recovered: Box::new(state),
            valid_bytes,
        };
        if buf.last() != Some(&b'\n') {
            return Err(corrupt("truncated line (no trailing newline)".into(), state));
        }
        let record: TrackRecord = match serde_json::from_slice(&buf[..buf.len() - 1]) {
            Ok(r) => r,
            Err(e) => return Err(corrupt(e.to_string(), state)),
        };
        let mut next = state.clone();
        if let Err(e) = next.apply(&record) {
            return Err(corrupt(e.to_string(), state));
        }
        state = next;
        valid_bytes += n as u64;
    }
}

pub fn replay(path: &Path) -> Result<StoreState, TrackError> {
    replay_from(File::open(path)?)
}

/// Single-writer, many-reader tracking store.
pub struct TrackingStore {
    writer: Mutex<Option<File>>,
    snapshot: RwLock<Arc<StoreState>>,
}

impl Default for TrackingStore {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl TrackingStore {
    /// A store without a backing log.
    pub fn in_memory() -> Self {
        TrackingStore {
            writer: Mutex::new(None),
            snapshot: RwLock::new(Arc::new(StoreState::default())),
        }
    }

    /// Opens (creating if needed) a log and replays it. A corrupt line is an error.
    pub fn open(path: &Path) -> Result<Self, TrackError> {
        let state = if path.exists() {
            replay(path)?
        } else {
            StoreState::default()
        };
        Self::with_state(path, state)
    }

    /// Like [`open`](Self::open), but truncates a corrupt tail back to the
    /// valid prefix and reports what was dropped.
    pub fn open_recovering(path: &Path) -> Result<(Self, Option<TrackError>), TrackError> {
        if !path.exists() {
            return Ok((Self::with_state(path, StoreState::default())?, None));
        }
        match replay(path) {
            Ok(state) => Ok((Self::with_state(path, state)?, None)),
            Err(TrackError::CorruptLine {
                line,
                reason,
                recovered,
                valid_bytes,
            }) => {
                OpenOptions::new().write(true).open(path)?.set_len(valid_bytes)?;
                let store = Self::with_state(path, (*recovered).clone())?;
                Ok((
                    store,
                    Some(TrackError::CorruptLine {
                        line,
                        reason,
                        recovered,
                        valid_bytes,
                    }),
                ))
            }
            Err(e) => Err(e),
        }
    }

    fn with_state(path: &Path, state: StoreState) -> Result<Self, TrackError> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(TrackingStore {
            writer: Mutex::new(Some(file)),
            snapshot: RwLock::new(Arc::new(state)),
        })
    }

    /// Point-in-time view of the whole store.
    pub fn snapshot(&self) -> Arc<StoreState> {
        Arc::clone(&self.snapshot.read().expect("snapshot lock poisoned"))
    }

    fn commit(&self, parcel: &str, ts: f64, op: TrackOp) -> Result<Arc<TrackState>, TrackError> {
        let mut writer = self.writer.lock().expect("writer lock poisoned");
        let current = self.snapshot();
        let state = Arc::new(current.transition(parcel, ts, &op)?);
        let record = TrackRecord {
            seq: current.next_seq,
            ts,
            parcel: parcel.to_string(),
            op,
        };
        if let Some(file) = writer.as_mut() {
            let mut line = serde_json::to_vec(&record).expect("record serializes");
            line.push(b'\n');
            file.write_all(&line)?;
            file.flush()?;
        }
        let mut next = (*current).clone();
        next.parcels.insert(parcel.to_string(), Arc::clone(&state));
        next.next_seq += 1;
        *self.snapshot.write().expect("snapshot lock poisoned") = Arc::new(next);
        Ok(state)
    }

    pub fn register_route(
        &self,
        parcel_id: &str,
        route: Vec<Checkpoint>,
        ts: f64,
    ) -> Result<Arc<TrackState>, TrackError> {
        let route = route
            .into_iter()
            .map(|c| Checkpoint::new(c.name, c.lat, c.lon))
            .collect();
        self.commit(parcel_id, ts, TrackOp::Register { route })
    }

    pub fn record_checkpoint(
        &self,
        parcel_id: &str,
        checkpoint_name: &str,
        ts: f64,
    ) -> Result<Arc<TrackState>, TrackError> {
        let snapshot = self.snapshot();
        let current = snapshot
            .parcels
            .get(parcel_id)
            .ok_or_else(|| TrackError::UnknownParcel(parcel_id.to_string()))?;
        let cp = current
            .route
            .iter()
            .find(|c| c.name == checkpoint_name)
            .ok_or_else(|| TrackError::OutOfOrder(format!("{checkpoint_name:?} is not on the route of {parcel_id}")))?;
        let op = TrackOp::Checkpoint {
            name: cp.name.clone(),
            lat: cp.lat,
            lon: cp.lon,
        };
        self.commit(parcel_id, ts, op)
    }

    pub fn mark_dumped(&self, parcel_id: &str, ts: f64) -> Result<Arc<TrackState>, TrackError> {
        self.commit(parcel_id, ts, TrackOp::Dumped {})
    }

    pub fn query_track(&self, parcel_id: &str) -> Result<Arc<TrackState>, TrackError> {
        self.snapshot()
            .parcels
            .get(parcel_id)
            .cloned()
            .ok_or_else(|| TrackError::UnknownParcel(parcel_id.to_string()))
    }
}
