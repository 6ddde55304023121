//! Domain types shared by the codec, detectors, simulator and tracking store.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ID_LEN: usize = 12;
pub const MIN_WEIGHT_G: u32 = 1;
pub const MAX_WEIGHT_G: u32 = 50_000;
pub const MIN_DIM_MM: u32 = 10;
pub const MAX_DIM_MM: u32 = 600;
pub const MAX_ADDRESS_BYTES: usize = 120;
pub const MIN_TEMP_C: f64 = -20.0;
pub const MAX_TEMP_C: f64 = 200.0;

pub const DEFAULT_ZONES: [&str; 8] = ["DL", "RJ", "MH", "KA", "TN", "WB", "UP", "GJ"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Nature {
    Metallic,
    Nonmetallic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Fragility {
    Fragile,
    Regular,
}

impl Nature {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "METALLIC" => Some(Nature::Metallic),
            "NONMETALLIC" => Some(Nature::Nonmetallic),
            _ => None,
        }
    }
}

impl Fragility {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "FRAGILE" => Some(Fragility::Fragile),
            "REGULAR" => Some(Fragility::Regular),
            _ => None,
        }
    }
}

/// The set of zone codes a deployment accepts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZoneSet(BTreeSet<String>);

impl ZoneSet {
    pub fn new<I, S>(zones: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ZoneSet(zones.into_iter().map(Into::into).collect())
    }

    pub fn contains(&self, zone: &str) -> bool {
        self.0.contains(zone)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

impl Default for ZoneSet {
    fn default() -> Self {
        ZoneSet::new(DEFAULT_ZONES)
    }
}

/// Declared shipping attributes carried by the QR/RFID label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParcelLabel {
    pub id: String,
    pub weight_g: u32,
    pub dims_mm: [u32; 3],
    pub zone: String,
    pub nature: Nature,
    pub fragility: Fragility,
    pub address: String,
}

impl ParcelLabel {
    pub fn max_dim_mm(&self) -> u32 {
        self.dims_mm.iter().copied().max().unwrap_or(0)
    }

    pub fn to_raw(&self) -> RawLabel {
        RawLabel {
            id: Some(self.id.clone()),
            weight_g: Some(i64::from(self.weight_g)),
            dims_mm: Some(self.dims_mm.iter().map(|&d| i64::from(d)).collect()),
            zone: Some(self.zone.clone()),
            nature: Some(format!("{:?}", self.nature).to_ascii_uppercase()),
            fragility: Some(format!("{:?}", self.fragility).to_ascii_uppercase()),
            address: Some(self.address.clone()),
        }
    }
}

/// Unchecked label fields, as they arrive from JSON bodies or CLI flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RawLabel {
    pub id: Option<String>,
    pub weight_g: Option<i64>,
    pub dims_mm: Option<Vec<i64>>,
    pub zone: Option<String>,
    pub nature: Option<String>,
    pub fragility: Option<String>,
    pub address: Option<String>,
}

/// Every rule a candidate label broke, in field order.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("VALIDATION: {}", .0.join("; "))]
pub struct ValidationErrors(pub Vec<String>);

fn check_range(errors: &mut Vec<String>, field: &str, v: i64, lo: u32, hi: u32) -> Option<u32> {
    if v < i64::from(lo) {
        errors.push(format!("{field} below minimum {lo}"));
        None
    } else if v > i64::from(hi) {
        errors.push(format!("{field} above maximum {hi}"));
        None
    } else {
        Some(v as u32)
    }
}

pub fn is_valid_id(id: &str) -> bool {
    id.len() == ID_LEN && id.bytes().all(|b| b.is_ascii_uppercase() || b.is_ascii_digit())
}

/// Checks every label rule and returns either the label or all violations.
pub fn validate_label(raw: &RawLabel, zones: &ZoneSet) -> Result<ParcelLabel, ValidationErrors> {
    let mut errors = Vec::new();

    let id = match &raw.id {
        None => {
            errors.push("id missing".to_string());
            None
        }
        Some(id) if !is_valid_id(id) => {
            errors.push("id must be 12 uppercase alphanumeric characters".to_string());
            None
        }
        Some(id) => Some(id.clone()),
    };

    let weight_g = match raw.weight_g {
        None => {
            errors.push("weight_g missing".to_string());
            None
        }
        Some(w) => check_range(&mut errors, "weight_g", w, MIN_WEIGHT_G, MAX_WEIGHT_G),
    };

    let dims_mm = match &raw.dims_mm {
        None => {
            errors.push("dims_mm missing".to_string());
            None
        }
        Some(d) if d.len() != 3 => {
            errors.push(format!("dims_mm must have 3 entries, got {}", d.len()));
            None
        }
        Some(d) => {
            let checked: Vec<Option<u32>> = d
                .iter()
                .enumerate()
                .map(|(i, &v)| check_range(&mut errors, &format!("dims_mm[{i}]"), v, MIN_DIM_MM, MAX_DIM_MM))
                .collect();
            match checked[..] {
                [Some(l), Some(w), Some(h)] => Some([l, w, h]),
                _ => None,
            }
        }
    };

    let zone = match &raw.zone {
        None => {
            errors.push("zone missing".to_string());
            None
        }
        Some(z) if z.len() != 2 || !z.bytes().all(|b| b.is_ascii_uppercase()) => {
            errors.push(format!("zone '{z}' must be 2 uppercase letters"));
            None
        }
        Some(z) if !zones.contains(z) => {
            errors.push(format!("zone '{z}' not in configured zone set"));
            None
        }
        Some(z) => Some(z.clone()),
    };

    let nature = match raw.nature.as_deref() {
        None => {
            errors.push("nature missing".to_string());
            None
        }
        Some(s) => Nature::parse(s).or_else(|| {
            errors.push(format!("nature '{s}' must be METALLIC or NONMETALLIC"));
            None
        }),
    };

    let fragility = match raw.fragility.as_deref() {
        None => {
            errors.push("fragility missing".to_string());
            None
        }
        Some(s) => Fragility::parse(s).or_else(|| {
            errors.push(format!("fragility '{s}' must be FRAGILE or REGULAR"));
            None
        }),
    };

    let address = match &raw.address {
        None => {
            errors.push("address missing".to_string());
            None
        }
        Some(a) => {
            let before = errors.len();
            if a.len() > MAX_ADDRESS_BYTES {
                errors.push(format!("address exceeds {MAX_ADDRESS_BYTES} bytes"));
            }
            if a.contains('|') {
                errors.push("address contains '|'".to_string());
            }
            if a.chars().any(char::is_control) {
                errors.push("address contains control characters".to_string());
            }
            (errors.len() == before).then(|| a.clone())
        }
    };

    match (id, weight_g, dims_mm, zone, nature, fragility, address) {
        (Some(id), Some(weight_g), Some(dims_mm), Some(zone), Some(nature), Some(fragility), Some(address))
            if errors.is_empty() =>
        {
            Ok(ParcelLabel {
                id,
                weight_g,
                dims_mm,
                zone,
                nature,
                fragility,
                address,
            })
        }
        _ => Err(ValidationErrors(errors)),
    }
}

/// Re-checks an already typed label (e.g. one deserialized from a scenario file).
pub fn check_label(label: &ParcelLabel, zones: &ZoneSet) -> Result<(), ValidationErrors> {
    validate_label(&label.to_raw(), zones).map(|_| ())
}

/// Ground-truth object classes, in the fixed order used by every matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ObjectClass {
    Blade,
    Gun,
    Knife,
    Shuriken,
    NonDangerous,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 5] = [
        ObjectClass::Blade,
        ObjectClass::Gun,
        ObjectClass::Knife,
        ObjectClass::Shuriken,
        ObjectClass::NonDangerous,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ObjectClass::Blade => "BLADE",
            ObjectClass::Gun => "GUN",
            ObjectClass::Knife => "KNIFE",
            ObjectClass::Shuriken => "SHURIKEN",
            ObjectClass::NonDangerous => "NON_DANGEROUS",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

impl fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Cell temperatures in degrees Celsius, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ThermalMap(pub Vec<Vec<f64>>);

impl ThermalMap {
    pub fn uniform(rows: usize, cols: usize, temp_c: f64) -> Self {
        ThermalMap(vec![vec![temp_c; cols]; rows])
    }

    pub fn rows(&self) -> usize {
        self.0.len()
    }

    pub fn cols(&self) -> usize {
        self.0.first().map_or(0, Vec::len)
    }

    pub fn is_rectangular(&self) -> bool {
        let cols = self.cols();
        self.0.iter().all(|r| r.len() == cols)
    }
}

/// A parcel as it physically is: declared label plus hidden ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParcelInstance {
    pub label: ParcelLabel,
    pub true_class: ObjectClass,
    #[serde(default)]
    pub metal_mass_g: f64,
    #[serde(default = "one")]
    pub orientation_factor: f64,
    pub true_weight_g: f64,
    pub thermal_map: ThermalMap,
    /// Only consulted when the size check is enabled in the detector config.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_dims_mm: Option<[u32; 3]>,
}

fn one() -> f64 {
    1.0
}

impl ParcelInstance {
    /// A parcel with no metal, a harmless object, a cold thermal map and a
    /// true weight equal to its declared weight.
    pub fn clean(label: ParcelLabel) -> Self {
        let true_weight_g = f64::from(label.weight_g);
        ParcelInstance {
            label,
            true_class: ObjectClass::NonDangerous,
            metal_mass_g: 0.0,
            orientation_factor: 1.0,
            true_weight_g,
            thermal_map: ThermalMap::uniform(4, 4, 22.0),
            true_dims_mm: None,
        }
    }

    pub fn check(&self, zones: &ZoneSet) -> Vec<String> {
        let mut problems = match check_label(&self.label, zones) {
            Ok(()) => Vec::new(),
            Err(ValidationErrors(e)) => e,
        };
        if !(self.metal_mass_g >= 0.0 && self.metal_mass_g.is_finite()) {
            problems.push("metal_mass_g must be finite and non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.orientation_factor) {
            problems.push("orientation_factor must be in [0,1]".into());
        }
        if !(self.true_weight_g > 0.0 && self.true_weight_g.is_finite()) {
            problems.push("true_weight_g must be positive".into());
        }
        if self.thermal_map.rows() == 0 || self.thermal_map.cols() == 0 {
            problems.push("thermal_map is empty".into());
        } else if !self.thermal_map.is_rectangular() {
            problems.push("thermal_map is not rectangular".into());
        }
        if self
            .thermal_map
            .0
            .iter()
            .flatten()
            .any(|t| !(MIN_TEMP_C..=MAX_TEMP_C).contains(t))
        {
            problems.push(format!(
                "thermal_map temperatures must be in [{MIN_TEMP_C}, {MAX_TEMP_C}]"
            ));
        }
        problems
            .into_iter()
            .map(|p| format!("{}: {p}", self.label.id))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Station {
    Register,
    Metal,
    Xray,
    Ir,
    Measure,
}

impl Station {
    /// Inspection stations in the order every parcel visits them.
    pub const SCAN_ORDER: [Station; 4] = [Station::Metal, Station::Xray, Station::Ir, Station::Measure];

    pub fn ordinal(self) -> u64 {
        self as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Pass,
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measurement {
    InductanceShiftPpm(f64),
    PredictedClass(ObjectClass),
    HotspotAreaCells(u32),
    MeasuredWeightG(f64),
}

/// One station's verdict together with what it measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanOutcome {
    pub station: Station,
    pub verdict: Verdict,
    pub measurement: Measurement,
}

impl ScanOutcome {
    pub fn tag_matches_station(&self) -> bool {
        matches!(
            (self.station, self.measurement),
            (Station::Metal, Measurement::InductanceShiftPpm(_))
                | (Station::Xray, Measurement::PredictedClass(_))
                | (Station::Ir, Measurement::HotspotAreaCells(_))
                | (Station::Measure, Measurement::MeasuredWeightG(_))
        )
    }

    pub fn rejected(&self) -> bool {
        self.verdict == Verdict::Reject
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    Arrive,
    StationStart,
    StationDone,
    Dumped,
    Binned,
    Checkpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventPayload {
    Arrive {},
    StationStart {
        station: Station,
    },
    StationDone {
        #[serde(flatten)]
        outcome: ScanOutcome,
        /// Hidden ground truth, recorded on X-ray outcomes so evaluation
        /// pairs can be recovered from the log.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        truth: Option<ObjectClass>,
    },
    Dumped {
        station: Station,
    },
    Binned {
        bin: String,
    },
    Checkpoint {
        name: String,
        lat: f64,
        lon: f64,
    },
}

impl EventPayload {
    pub fn kind(&self) -> EventKind {
        match self {
            EventPayload::Arrive {} => EventKind::Arrive,
            EventPayload::StationStart { .. } => EventKind::StationStart,
            EventPayload::StationDone { .. } => EventKind::StationDone,
            EventPayload::Dumped { .. } => EventKind::Dumped,
            EventPayload::Binned { .. } => EventKind::Binned,
            EventPayload::Checkpoint { .. } => EventKind::Checkpoint,
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, EventPayload::Dumped { .. } | EventPayload::Binned { .. })
    }
}

/// One line of the simulation event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub seq: u64,
    #[serde(rename = "ts")]
    pub time_s: f64,
    #[serde(rename = "parcel")]
    pub parcel_id: String,
    #[serde(flatten)]
    pub payload: EventPayload,
}

impl SimEvent {
    pub fn kind(&self) -> EventKind {
        self.payload.kind()
    }
}
