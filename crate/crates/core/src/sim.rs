//! Deterministic discrete-event simulation of the scan-and-sort line.
//!
//! Every parcel arrives, rides the conveyor to METAL, XRAY, IR and MEASURE
//! in that order, and is dumped at the first REJECT or pushed into a bin.
//! Stations are single-server FIFO with fixed service times. Pending
//! events are ordered by `(time, insertion seq)`, so simultaneous events
//! resolve in the order they were scheduled.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet, VecDeque};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detectors::{ir_scan, measure_weight, metal_scan, xray_classify_unchecked, DetectorConfig};
use crate::model::{EventPayload, ParcelInstance, ScanOutcome, SimEvent, Station, ZoneSet};
use crate::rng::prng_stream;
use crate::sorter::{assign_bin, push_delay, BinConfig, SortBasis};
use crate::ChannelModel;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("SCENARIO_INVALID: {}", .0.join("; "))]
    ScenarioInvalid(Vec<String>),
    #[error("BAD_LOG: line {line}: {reason}")]
    BadLog { line: usize, reason: String },
}

impl SimError {
    pub fn code(&self) -> &'static str {
        match self {
            SimError::ScenarioInvalid(_) => "SCENARIO_INVALID",
            SimError::BadLog { .. } => "BAD_LOG",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceTimes {
    pub metal: f64,
    pub xray: f64,
    pub ir: f64,
    pub measure: f64,
}

impl Default for ServiceTimes {
    fn default() -> Self {
        ServiceTimes {
            metal: 1.0,
            xray: 1.0,
            ir: 1.0,
            measure: 1.0,
        }
    }
}

impl ServiceTimes {
    pub fn get(&self, station: Station) -> f64 {
        match station {
            Station::Metal => self.metal,
            Station::Xray => self.xray,
            Station::Ir => self.ir,
            Station::Measure => self.measure,
            Station::Register => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParcel {
    #[serde(default)]
    pub arrival_s: f64,
    #[serde(flatten)]
    pub instance: ParcelInstance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub parcels: Vec<ScenarioParcel>,
    #[serde(default)]
    pub detector_config: DetectorConfig,
    #[serde(default = "ChannelModel::reference")]
    pub xray_model: ChannelModel,
    #[serde(default)]
    pub station_service_s: ServiceTimes,
    #[serde(default = "default_transit")]
    pub conveyor_transit_s: f64,
    #[serde(default = "default_basis")]
    pub sort_basis: SortBasis,
    #[serde(default)]
    pub bins: BinConfig,
    #[serde(default)]
    pub seed: u64,
}

fn default_transit() -> f64 {
    2.0
}

fn default_basis() -> SortBasis {
    SortBasis::Weight
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            parcels: Vec::new(),
            detector_config: DetectorConfig::default(),
            xray_model: ChannelModel::reference(),
            station_service_s: ServiceTimes::default(),
            conveyor_transit_s: default_transit(),
            sort_basis: default_basis(),
            bins: BinConfig::default(),
            seed: 0,
        }
    }
}

impl Scenario {
    /// Loads a JSON scenario, or TOML when the file ends in `.toml`.
    pub fn load(path: &Path) -> Result<Self, crate::Error> {
        let text = std::fs::read_to_string(path)?;
        let parsed = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| e.to_string())
        } else {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| SimError::ScenarioInvalid(vec![e]).into())
    }

    pub fn zones(&self) -> ZoneSet {
        ZoneSet::new(self.bins.zones.iter().cloned())
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let mut problems = Vec::new();
        if let Err(e) = self.detector_config.validate() {
            problems.push(e.to_string());
        }
        if let Err(e) = self.xray_model.validate() {
            problems.push(e.to_string());
        }
        if let Err(e) = self.bins.validate() {
            problems.push(e.to_string());
        }
        if let Some(positions) = &self.bins.belt_positions_m {
            if let Err(e) =
                crate::sorter::drum_plan(&self.bins.bin_ids(self.sort_basis), positions, self.bins.belt_speed_mps)
            {
                problems.push(e.to_string());
            }
        }
        for station in Station::SCAN_ORDER {
            let t = self.station_service_s.get(station);
            if !(t > 0.0 && t.is_finite()) {
                problems.push(format!("service time for {station:?} must be positive"));
            }
        }
        if !(self.conveyor_transit_s > 0.0 && self.conveyor_transit_s.is_finite()) {
            problems.push("conveyor_transit_s must be positive".into());
        }
        let zones = self.zones();
        let mut ids = HashSet::new();
        for p in &self.parcels {
            if !(p.arrival_s >= 0.0 && p.arrival_s.is_finite()) {
                problems.push(format!(
                    "{}: arrival_s must be finite and non-negative",
                    p.instance.label.id
                ));
            }
            if !ids.insert(p.instance.label.id.as_str()) {
                problems.push(format!("{}: duplicate parcel id", p.instance.label.id));
            }
            problems.extend(p.instance.check(&zones));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(SimError::ScenarioInvalid(problems))
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub injected: u64,
    pub dumped: u64,
    pub binned: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub events: Vec<SimEvent>,
    pub totals: Totals,
    pub station_rejects: BTreeMap<Station, u64>,
    pub bin_occupancy: BTreeMap<String, u64>,
}

impl SimReport {
    /// Everything but the event list.
    pub fn summary(&self) -> serde_json::Value {
        serde_json::json!({
            "totals": self.totals,
            "station_rejects": self.station_rejects,
            "bin_occupancy": self.bin_occupancy,
        })
    }
}

#[derive(Debug)]
enum Step {
    Arrive(usize),
    ReachStation(usize, usize),
    Done(usize, usize),
    ReachSorter(usize),
    Push(usize, String),
}

#[derive(Debug)]
struct Pending {
    time: f64,
    seq: u64,
    step: Step,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    // Reversed so BinaryHeap pops the earliest (time, seq).
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then_with(|| other.seq.cmp(&self.seq))
    }
}

#[derive(Default)]
struct StationState {
    busy: bool,
    queue: VecDeque<usize>,
}

struct Engine<'a> {
    s: &'a Scenario,
    queue: BinaryHeap<Pending>,
    next_seq: u64,
    stations: [StationState; 4],
    report: SimReport,
}

impl<'a> Engine<'a> {
    fn schedule(&mut self, time: f64, step: Step) {
        self.queue.push(Pending {
            time,
            seq: self.next_seq,
            step,
        });
        self.next_seq += 1;
    }

    fn log(&mut self, time: f64, parcel: usize, payload: EventPayload) {
        let seq = self.report.events.len() as u64;
        self.report.events.push(SimEvent {
            seq,
            time_s: time,
            parcel_id: self.s.parcels[parcel].instance.label.id.clone(),
            payload,
        });
    }

    fn start(&mut self, parcel: usize, k: usize, now: f64) {
        let station = Station::SCAN_ORDER[k];
        self.stations[k].busy = true;
        self.log(now, parcel, EventPayload::StationStart { station });
        self.schedule(now + self.s.station_service_s.get(station), Step::Done(parcel, k));
    }

    fn scan(&self, parcel: usize, station: Station) -> ScanOutcome {
        let p = &self.s.parcels[parcel].instance;
        let cfg = &self.s.detector_config;
        let mut rng = prng_stream(self.s.seed, parcel as u64, station);
        match station {
            Station::Metal => metal_scan(p, cfg),
            Station::Xray => {
                xray_classify_unchecked(p.true_class, &self.s.xray_model, &cfg.dangerous_classes, &mut rng)
            }
            // Grid shape was checked by Scenario::validate.
            Station::Ir => ir_scan(&p.thermal_map, cfg).expect("validated thermal map"),
            Station::Measure => measure_weight(p, cfg, &mut rng),
            Station::Register => unreachable!("register is not a scan station"),
        }
    }

    fn step(&mut self, now: f64, step: Step) {
        let transit = self.s.conveyor_transit_s;
        match step {
            Step::Arrive(p) => {
                self.report.totals.injected += 1;
                self.log(now, p, EventPayload::Arrive {});
                self.schedule(now + transit, Step::ReachStation(p, 0));
            }
            Step::ReachStation(p, k) => {
                if self.stations[k].busy {
                    self.stations[k].queue.push_back(p);
                } else {
                    self.start(p, k, now);
                }
            }
            Step::Done(p, k) => {
                let station = Station::SCAN_ORDER[k];
                let outcome = self.scan(p, station);
                let truth = (station == Station::Xray).then_some(self.s.parcels[p].instance.true_class);
                self.log(now, p, EventPayload::StationDone { outcome, truth });
                if outcome.rejected() {
                    *self.report.station_rejects.entry(station).or_default() += 1;
                    self.report.totals.dumped += 1;
                    self.log(now, p, EventPayload::Dumped { station });
                } else if k + 1 < Station::SCAN_ORDER.len() {
                    self.schedule(now + transit, Step::ReachStation(p, k + 1));
                } else {
                    self.schedule(now + transit, Step::ReachSorter(p));
                }
                self.stations[k].busy = false;
                if let Some(next) = self.stations[k].queue.pop_front() {
                    self.start(next, k, now);
                }
            }
            Step::ReachSorter(p) => {
                let label = &self.s.parcels[p].instance.label;
                // Zone membership and belt positions were checked by Scenario::validate.
                let bin = assign_bin(label, self.s.sort_basis, &self.s.bins).expect("validated zone");
                let delay = push_delay(label, self.s.sort_basis, &self.s.bins).expect("validated belt positions");
                if delay == 0.0 {
                    self.bin(now, p, bin);
                } else {
                    self.schedule(now + delay, Step::Push(p, bin));
                }
            }
            Step::Push(p, bin) => self.bin(now, p, bin),
        }
    }

    fn bin(&mut self, now: f64, p: usize, bin: String) {
        self.report.totals.binned += 1;
        *self.report.bin_occupancy.entry(bin.clone()).or_default() += 1;
        self.log(now, p, EventPayload::Binned { bin });
    }
}

pub fn run(s: &Scenario) -> Result<SimReport, SimError> {
    s.validate()?;
    let mut engine = Engine {
        s,
        queue: BinaryHeap::new(),
        next_seq: 0,
        stations: Default::default(),
        report: SimReport {
            events: Vec::new(),
            totals: Totals::default(),
            station_rejects: BTreeMap::new(),
            bin_occupancy: BTreeMap::new(),
        },
    };
    for (i, p) in s.parcels.iter().enumerate() {
        engine.schedule(p.arrival_s, Step::Arrive(i));
    }
    while let Some(Pending { time, step, .. }) = engine.queue.pop() {
        engine.step(time, step);
    }
    Ok(engine.report)
}

pub fn write_jsonl<W: Write>(events: &[SimEvent], mut out: W) -> std::io::Result<()> {
    for ev in events {
        serde_json::to_writer(&mut out, ev)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<SimEvent>, crate::Error> {
    let mut events = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let ev = serde_json::from_str(&line).map_err(|e| SimError::BadLog {
            line: i + 1,
            reason: e.to_string(),
        })?;
        events.push(ev);
    }
    Ok(events)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Expect {
    Arrive,
    Start(usize),
    Done(usize),
    /// Passed station `k`; next is START(k+1) or, after the last, BINNED.
    AfterPass(usize),
    Dumped(Station),
    Terminal,
}

/// Checks a simulation log for seq density, per-parcel time order, station
/// order, short-circuit consistency and exactly one terminal event per parcel.
pub fn validate_log(events: &[SimEvent]) -> Vec<String> {
    let mut violations = Vec::new();
    let mut parcels: Vec<&str> = Vec::new();
    let mut state: HashMap<&str, (Expect, f64, u32)> = HashMap::new();
    let last = Station::SCAN_ORDER.len() - 1;

    for (i, ev) in events.iter().enumerate() {
        if ev.seq != i as u64 {
            violations.push(format!("seq at position {i} is {}, expected {i}", ev.seq));
        }
        let id = ev.parcel_id.as_str();
        let entry = state.entry(id).or_insert_with(|| {
            parcels.push(id);
            (Expect::Arrive, ev.time_s, 0)
        });
        let (expect, last_time, terminals) = entry;
        if ev.time_s < *last_time {
            violations.push(format!(
                "parcel {id} time decreases at seq {}: {} < {}",
                ev.seq, ev.time_s, last_time
            ));
        }
        *last_time = ev.time_s;

        if ev.payload.is_terminal() {
            *terminals += 1;
            if *terminals > 1 {
                continue;
            }
        }
        let next = match (&*expect, &ev.payload) {
            (Expect::Arrive, EventPayload::Arrive {}) => Some(Expect::Start(0)),
            (Expect::Start(k), EventPayload::StationStart { station }) if *station == Station::SCAN_ORDER[*k] => {
                Some(Expect::Done(*k))
            }
            (Expect::AfterPass(k), EventPayload::StationStart { station })
                if *k < last && *station == Station::SCAN_ORDER[k + 1] =>
            {
                Some(Expect::Done(k + 1))
            }
            (Expect::Done(k), EventPayload::StationDone { outcome, .. })
                if outcome.station == Station::SCAN_ORDER[*k] =>
            {
                if !outcome.tag_matches_station() {
                    violations.push(format!(
                        "parcel {id}: measurement does not match station at seq {}",
                        ev.seq
                    ));
                }
                Some(if outcome.rejected() {
                    Expect::Dumped(outcome.station)
                } else {
                    Expect::AfterPass(*k)
                })
            }
            (Expect::Dumped(s), EventPayload::Dumped { station }) if s == station => Some(Expect::Terminal),
            (Expect::AfterPass(k), EventPayload::Binned { .. }) if *k == last => Some(Expect::Terminal),
            (Expect::Terminal, _) => {
                violations.push(format!(
                    "parcel {id} has {:?} after its terminal event at seq {}",
                    ev.kind(),
                    ev.seq
                ));
                None
            }
            (e, _) => {
                violations.push(format!(
                    "parcel {id}: unexpected {:?} at seq {} (expected {e:?})",
                    ev.kind(),
                    ev.seq
                ));
                None
            }
        };
        if let Some(n) = next {
            *expect = n;
        }
    }

    for id in parcels {
        let terminals = state[id].2;
        if terminals != 1 {
            violations.push(format!("parcel {id} has {terminals} terminal events"));
        }
    }
    violations
}

/// Bin counts and dump count recovered from a log.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Occupancy {
    pub bins: BTreeMap<String, u64>,
    pub dumped: u64,
    pub injected: u64,
}

pub fn occupancy(events: &[SimEvent]) -> Occupancy {
    let mut occ = Occupancy::default();
    for ev in events {
        match &ev.payload {
            EventPayload::Arrive {} => occ.injected += 1,
            EventPayload::Dumped { .. } => occ.dumped += 1,
            EventPayload::Binned { bin } => *occ.bins.entry(bin.clone()).or_default() += 1,
            _ => {}
        }
    }
    occ
}

/// `(truth, predicted)` class names from every X-ray outcome that carries truth.
pub fn xray_pairs(events: &[SimEvent]) -> Vec<(String, String)> {
    events
        .iter()
        .filter_map(|ev| match &ev.payload {
            EventPayload::StationDone {
                outcome:
                    ScanOutcome {
                        measurement: crate::model::Measurement::PredictedClass(pred),
                        ..
                    },
                truth: Some(truth),
            } => Some((truth.name().to_string(), pred.name().to_string())),
            _ => None,
        })
        .collect()
}
