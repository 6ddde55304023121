//! Sorting phase: bin assignment under the run's sort basis, and the drum
//! actuation table that turns belt positions into push delays.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Fragility, Nature, ParcelLabel, DEFAULT_ZONES};

pub const DEFAULT_BELT_SPEED_MPS: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SortError {
    #[error("UNKNOWN_ZONE: {0:?} has no bin")]
    UnknownZone(String),
    #[error("DUPLICATE_POSITION: {0}")]
    DuplicatePosition(String),
    #[error("BIN_CONFIG_INVALID: {0}")]
    InvalidConfig(String),
}

impl SortError {
    pub fn code(&self) -> &'static str {
        match self {
            SortError::UnknownZone(_) => "UNKNOWN_ZONE",
            SortError::DuplicatePosition(_) => "DUPLICATE_POSITION",
            SortError::InvalidConfig(_) => "BIN_CONFIG_INVALID",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SortBasis {
    Weight,
    #[serde(rename = "dims", alias = "dimensions")]
    Dimensions,
    Zone,
}

impl std::str::FromStr for SortBasis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "weight" => Ok(SortBasis::Weight),
            "dims" | "dimensions" => Ok(SortBasis::Dimensions),
            "zone" => Ok(SortBasis::Zone),
            other => Err(format!("unknown sort basis {other:?} (expected weight, dims or zone)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BinConfig {
    pub weight_thresholds_g: Vec<u32>,
    /// Thresholds over the largest of the three dimensions.
    pub dim_thresholds_mm: Vec<u32>,
    pub zones: Vec<String>,
    /// Secondary split by declared nature, appends `:M` / `:N`.
    pub split_nature: bool,
    /// Secondary split by fragility, appends `:F` / `:R`.
    pub split_fragility: bool,
    /// Sharp-sensor positions along the sorting belt, one per bin of the
    /// active basis, in bin order. Without positions parcels bin on entry.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub belt_positions_m: Option<Vec<f64>>,
    pub belt_speed_mps: f64,
}

impl Default for BinConfig {
    fn default() -> Self {
        BinConfig {
            weight_thresholds_g: vec![1000, 5000],
            dim_thresholds_mm: vec![200, 400],
            zones: DEFAULT_ZONES.iter().map(|z| z.to_string()).collect(),
            split_nature: false,
            split_fragility: false,
            belt_positions_m: None,
            belt_speed_mps: DEFAULT_BELT_SPEED_MPS,
        }
    }
}

fn strictly_ascending_positive(name: &str, v: &[u32]) -> Result<(), SortError> {
    if v.first() == Some(&0) || v.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SortError::InvalidConfig(format!(
            "{name} must be positive and strictly ascending"
        )));
    }
    Ok(())
}

impl BinConfig {
    pub fn validate(&self) -> Result<(), SortError> {
        strictly_ascending_positive("weight_thresholds_g", &self.weight_thresholds_g)?;
        strictly_ascending_positive("dim_thresholds_mm", &self.dim_thresholds_mm)?;
        let mut zones = self.zones.clone();
        zones.sort();
        zones.dedup();
        if zones.len() != self.zones.len() {
            return Err(SortError::InvalidConfig("zones must be unique".into()));
        }
        if !(self.belt_speed_mps > 0.0 && self.belt_speed_mps.is_finite()) {
            return Err(SortError::InvalidConfig("belt_speed_mps must be positive".into()));
        }
        Ok(())
    }

    /// Primary bin ids for a basis, in belt order.
    pub fn bin_ids(&self, basis: SortBasis) -> Vec<String> {
        match basis {
            SortBasis::Weight => (0..=self.weight_thresholds_g.len()).map(|i| format!("W{i}")).collect(),
            SortBasis::Dimensions => (0..=self.dim_thresholds_mm.len()).map(|i| format!("D{i}")).collect(),
            SortBasis::Zone => self.zones.iter().map(|z| format!("ZONE:{z}")).collect(),
        }
    }
}

/// Number of thresholds at or below `v`; a value equal to a threshold goes up.
fn bucket(v: u32, thresholds: &[u32]) -> usize {
    thresholds.partition_point(|&t| t <= v)
}

fn primary_bin(label: &ParcelLabel, basis: SortBasis, cfg: &BinConfig) -> Result<(usize, String), SortError> {
    match basis {
        SortBasis::Weight => {
            let i = bucket(label.weight_g, &cfg.weight_thresholds_g);
            Ok((i, format!("W{i}")))
        }
        SortBasis::Dimensions => {
            let i = bucket(label.max_dim_mm(), &cfg.dim_thresholds_mm);
            Ok((i, format!("D{i}")))
        }
        SortBasis::Zone => cfg
            .zones
            .iter()
            .position(|z| *z == label.zone)
            .map(|i| (i, format!("ZONE:{}", label.zone)))
            .ok_or_else(|| SortError::UnknownZone(label.zone.clone())),
    }
}

pub fn assign_bin(label: &ParcelLabel, basis: SortBasis, cfg: &BinConfig) -> Result<String, SortError> {
    let (_, mut id) = primary_bin(label, basis, cfg)?;
    if cfg.split_nature {
        id.push_str(match label.nature {
            Nature::Metallic => ":M",
            Nature::Nonmetallic => ":N",
        });
    }
    if cfg.split_fragility {
        id.push_str(match label.fragility {
            Fragility::Fragile => ":F",
            Fragility::Regular => ":R",
        });
    }
    Ok(id)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrumAction {
    pub bin: String,
    pub sensor_position_m: f64,
    pub push_delay_s: f64,
}

/// Maps each bin to its sensor position and the delay from sort entry to
/// the drum push.
pub fn drum_plan(bins: &[String], belt_positions_m: &[f64], belt_speed_mps: f64) -> Result<Vec<DrumAction>, SortError> {
    if bins.len() != belt_positions_m.len() {
        return Err(SortError::InvalidConfig(format!(
            "{} bins but {} belt positions",
            bins.len(),
            belt_positions_m.len()
        )));
    }
    if !(belt_speed_mps > 0.0 && belt_speed_mps.is_finite()) {
        return Err(SortError::InvalidConfig("belt speed must be positive".into()));
    }
    if belt_positions_m.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(SortError::InvalidConfig(
            "belt positions must be finite and non-negative".into(),
        ));
    }
    if let Some(w) = belt_positions_m.windows(2).find(|w| w[0] >= w[1]) {
        return Err(SortError::DuplicatePosition(format!(
            "positions must be strictly ascending, found {} then {}",
            w[0], w[1]
        )));
    }
    Ok(bins
        .iter()
        .zip(belt_positions_m)
        .map(|(bin, &pos)| DrumAction {
            bin: bin.clone(),
            sensor_position_m: pos,
            push_delay_s: pos / belt_speed_mps,
        })
        .collect())
}

/// Delay between sort entry and the push for one parcel; zero without positions.
pub fn push_delay(label: &ParcelLabel, basis: SortBasis, cfg: &BinConfig) -> Result<f64, SortError> {
    let Some(positions) = &cfg.belt_positions_m else {
        return Ok(0.0);
    };
    let plan = drum_plan(&cfg.bin_ids(basis), positions, cfg.belt_speed_mps)?;
    let (i, _) = primary_bin(label, basis, cfg)?;
    Ok(plan[i].push_delay_s)
}
