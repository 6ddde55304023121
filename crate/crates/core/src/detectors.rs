//! Station models: metal coil, X-ray classifier channel, IR hotspot and
//! weight check. Each is a pure function of the parcel's ground truth plus,
//! where stochastic, an explicit PRNG stream.

use std::collections::BTreeSet;
use std::collections::VecDeque;

use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::REFERENCE_COUNTS;
use crate::model::{Measurement, ObjectClass, ParcelInstance, ScanOutcome, Station, ThermalMap, Verdict};
use crate::rng::SplitMix64;

pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DetectorError {
    #[error("MODEL_INVALID: {0}")]
    ModelInvalid(String),
    #[error("EMPTY_GRID: thermal map has no cells")]
    EmptyGrid,
    #[error("CONFIG_INVALID: {0}")]
    ConfigInvalid(String),
}

impl DetectorError {
    pub fn code(&self) -> &'static str {
        match self {
            DetectorError::ModelInvalid(_) => "MODEL_INVALID",
            DetectorError::EmptyGrid => "EMPTY_GRID",
            DetectorError::ConfigInvalid(_) => "CONFIG_INVALID",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub metal_k_ppm_per_g: f64,
    pub metal_threshold_ppm: f64,
    pub ir_hot_temp_c: f64,
    pub ir_min_area_cells: u32,
    pub weight_mismatch_frac: f64,
    pub weight_noise_frac: f64,
    pub dangerous_classes: BTreeSet<ObjectClass>,
    /// Enables the size check at the measure station; `None` leaves it off.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub size_tolerance_mm: Option<u32>,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            metal_k_ppm_per_g: 2.0,
            metal_threshold_ppm: 10.0,
            ir_hot_temp_c: 35.0,
            ir_min_area_cells: 4,
            weight_mismatch_frac: 0.05,
            weight_noise_frac: 0.02,
            dangerous_classes: ObjectClass::ALL
                .into_iter()
                .filter(|&c| c != ObjectClass::NonDangerous)
                .collect(),
            size_tolerance_mm: None,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectorError> {
        let positive = [
            ("metal_k_ppm_per_g", self.metal_k_ppm_per_g),
            ("metal_threshold_ppm", self.metal_threshold_ppm),
            ("ir_hot_temp_c", self.ir_hot_temp_c),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(DetectorError::ConfigInvalid(format!("{name} must be positive")));
            }
        }
        if self.ir_min_area_cells == 0 {
            return Err(DetectorError::ConfigInvalid(
                "ir_min_area_cells must be positive".into(),
            ));
        }
        for (name, v) in [
            ("weight_mismatch_frac", self.weight_mismatch_frac),
            ("weight_noise_frac", self.weight_noise_frac),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(DetectorError::ConfigInvalid(format!("{name} must be in [0,1)")));
            }
        }
        Ok(())
    }
}

/// Noisy-channel stand-in for the X-ray image classifier: entry `(i, j)` is
/// the probability of predicting class `j` when the truth is class `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XrayChannelModel<T> {
    pub classes: Vec<ObjectClass>,
    pub row_probs: Vec<Vec<T>>,
}

impl<T: Float> XrayChannelModel<T> {
    pub fn identity() -> Self {
        let n = ObjectClass::ALL.len();
        XrayChannelModel {
            classes: ObjectClass::ALL.to_vec(),
            row_probs: (0..n)
                .map(|i| (0..n).map(|j| if i == j { T::one() } else { T::zero() }).collect())
                .collect(),
        }
    }

    /// Row-normalized counts, rows in [`ObjectClass::ALL`] order.
    pub fn from_counts(counts: &[[u64; 5]; 5]) -> Self {
        XrayChannelModel {
            classes: ObjectClass::ALL.to_vec(),
            row_probs: counts
                .iter()
                .map(|row| {
                    let total: u64 = row.iter().sum();
                    row.iter()
                        .map(|&c| T::from(c).unwrap() / T::from(total.max(1)).unwrap())
                        .collect()
                })
                .collect(),
        }
    }

    /// The default channel: the confusion matrix recovered from the published
    /// classification report, row-normalized.
    pub fn reference() -> Self {
        Self::from_counts(&REFERENCE_COUNTS)
    }

    pub fn validate(&self) -> Result<(), DetectorError> {
        let n = ObjectClass::ALL.len();
        if self.classes != ObjectClass::ALL {
            return Err(DetectorError::ModelInvalid(
                "classes must be BLADE, GUN, KNIFE, SHURIKEN, NON_DANGEROUS in order".into(),
            ));
        }
        if self.row_probs.len() != n {
            return Err(DetectorError::ModelInvalid(format!(
                "expected {n} rows, found {}",
                self.row_probs.len()
            )));
        }
        let tol = T::from(ROW_SUM_TOLERANCE)
            .unwrap()
            .max(T::epsilon() * T::from(64).unwrap());
        for (i, row) in self.row_probs.iter().enumerate() {
            if row.len() != n {
                return Err(DetectorError::ModelInvalid(format!(
                    "row {i} has {} entries",
                    row.len()
                )));
            }
            if row
                .iter()
                .any(|&p| p.partial_cmp(&T::zero()).is_none_or(|o| o.is_lt()) || !p.is_finite())
            {
                return Err(DetectorError::ModelInvalid(format!(
                    "row {i} has a negative or non-finite entry"
                )));
            }
            let sum = row.iter().fold(T::zero(), |a, &p| a + p);
            if (sum - T::one()).abs() > tol {
                return Err(DetectorError::ModelInvalid(format!(
                    "row {i} sums to {}",
                    sum.to_f64().unwrap_or(f64::NAN)
                )));
            }
        }
        Ok(())
    }

    /// Inverse-CDF lookup of a uniform draw in the truth row.
    pub fn sample(&self, truth: ObjectClass, u: f64) -> ObjectClass {
        let row = &self.row_probs[truth.index()];
        let u = T::from(u).unwrap();
        let mut cum = T::zero();
        for (j, &p) in row.iter().enumerate() {
            cum = cum + p;
            if u < cum {
                return self.classes[j];
            }
        }
        // Rounding left the cumulative sum just under 1; take the last class with mass.
        let last = row.iter().rposition(|&p| p > T::zero()).unwrap_or(truth.index());
        self.classes[last]
    }
}

/// Coil inductance shift `k * mass * orientation`; rejects at or above threshold.
pub fn metal_scan(p: &ParcelInstance, cfg: &DetectorConfig) -> ScanOutcome {
    let shift = cfg.metal_k_ppm_per_g * p.metal_mass_g * p.orientation_factor;
    ScanOutcome {
        station: Station::Metal,
        verdict: if shift >= cfg.metal_threshold_ppm {
            Verdict::Reject
        } else {
            Verdict::Pass
        },
        measurement: Measurement::InductanceShiftPpm(shift),
    }
}

pub fn xray_classify<T: Float>(
    true_class: ObjectClass,
    model: &XrayChannelModel<T>,
    dangerous: &BTreeSet<ObjectClass>,
    rng: &mut SplitMix64,
) -> Result<ScanOutcome, DetectorError> {
    model.validate()?;
    Ok(xray_classify_unchecked(true_class, model, dangerous, rng))
}

/// As [`xray_classify`], for callers that validated the model once up front.
pub fn xray_classify_unchecked<T: Float>(
    true_class: ObjectClass,
    model: &XrayChannelModel<T>,
    dangerous: &BTreeSet<ObjectClass>,
    rng: &mut SplitMix64,
) -> ScanOutcome {
    let predicted = model.sample(true_class, rng.next_f64());
    ScanOutcome {
        station: Station::Xray,
        verdict: if dangerous.contains(&predicted) {
            Verdict::Reject
        } else {
            Verdict::Pass
        },
        measurement: Measurement::PredictedClass(predicted),
    }
}

/// Size of the largest 4-connected region of cells at or above `hot_c`.
pub fn largest_hotspot(map: &ThermalMap, hot_c: f64) -> u32 {
    let rows = map.rows();
    let cols = map.cols();
    let mut seen = vec![false; rows * cols];
    let mut best = 0u32;
    let mut queue = VecDeque::new();
    for r in 0..rows {
        for c in 0..cols {
            if seen[r * cols + c] || map.0[r][c] < hot_c {
                continue;
            }
            seen[r * cols + c] = true;
            queue.push_back((r, c));
            let mut area = 0u32;
            while let Some((y, x)) = queue.pop_front() {
                area += 1;
                let neighbours = [(y.wrapping_sub(1), x), (y + 1, x), (y, x.wrapping_sub(1)), (y, x + 1)];
                for (ny, nx) in neighbours {
                    if ny < rows && nx < cols && !seen[ny * cols + nx] && map.0[ny][nx] >= hot_c {
                        seen[ny * cols + nx] = true;
                        queue.push_back((ny, nx));
                    }
                }
            }
            best = best.max(area);
        }
    }
    best
}

pub fn ir_scan(thermal_map: &ThermalMap, cfg: &DetectorConfig) -> Result<ScanOutcome, DetectorError> {
    if thermal_map.rows() == 0 || thermal_map.cols() == 0 || !thermal_map.is_rectangular() {
        return Err(DetectorError::EmptyGrid);
    }
    let area = largest_hotspot(thermal_map, cfg.ir_hot_temp_c);
    Ok(ScanOutcome {
        station: Station::Ir,
        verdict: if area >= cfg.ir_min_area_cells {
            Verdict::Reject
        } else {
            Verdict::Pass
        },
        measurement: Measurement::HotspotAreaCells(area),
    })
}

/// Weighs the parcel with uniform multiplicative noise and compares against
/// the declared weight. The mismatch test is strict, so a deviation of
/// exactly `weight_mismatch_frac` passes.
pub fn measure_weight(p: &ParcelInstance, cfg: &DetectorConfig, rng: &mut SplitMix64) -> ScanOutcome {
    let eps = cfg.weight_noise_frac * (2.0 * rng.next_f64() - 1.0);
    let measured = p.true_weight_g * (1.0 + eps);
    let declared = f64::from(p.label.weight_g);
    let weight_bad = (measured - declared).abs() / declared > cfg.weight_mismatch_frac;
    let size_bad = match (cfg.size_tolerance_mm, p.true_dims_mm) {
        (Some(tol), Some(true_dims)) => true_dims.iter().zip(p.label.dims_mm).any(|(&t, d)| t.abs_diff(d) > tol),
        _ => false,
    };
    ScanOutcome {
        station: Station::Measure,
        verdict: if weight_bad || size_bad {
            Verdict::Reject
        } else {
            Verdict::Pass
        },
        measurement: Measurement::MeasuredWeightG(measured),
    }
}
