#![allow(dead_code)]

use parcel_core::model::{
    Fragility, Nature, ObjectClass, ParcelInstance, ParcelLabel, ThermalMap, DEFAULT_ZONES, MAX_DIM_MM, MAX_WEIGHT_G,
    MIN_DIM_MM, MIN_WEIGHT_G,
};
use parcel_core::sim::{Scenario, ScenarioParcel};
use parcel_core::sorter::SortBasis;
use proptest::prelude::*;

pub fn arb_id() -> impl Strategy<Value = String> {
    "[A-Z0-9]{12}"
}

/// Addresses mixing printable ASCII, escapes, spaces and multi-byte UTF-8,
/// trimmed to the 120-byte limit on a character boundary.
pub fn arb_address() -> impl Strategy<Value = String> {
    proptest::collection::vec(
        prop_oneof![
            4 => proptest::char::range('!', '~'),
            1 => Just(' '),
            1 => Just('%'),
            1 => Just('é'),
            1 => Just('\u{0915}'),
            1 => Just('\u{1F4E6}'),
        ],
        0..80,
    )
    .prop_map(|chars| {
        let mut s = String::new();
        for c in chars.into_iter().filter(|&c| c != '|') {
            if s.len() + c.len_utf8() > 120 {
                break;
            }
            s.push(c);
        }
        s
    })
}

pub fn arb_label() -> impl Strategy<Value = ParcelLabel> {
    (
        arb_id(),
        MIN_WEIGHT_G..=MAX_WEIGHT_G,
        proptest::array::uniform3(MIN_DIM_MM..=MAX_DIM_MM),
        proptest::sample::select(DEFAULT_ZONES.to_vec()),
        any::<bool>(),
        any::<bool>(),
        arb_address(),
    )
        .prop_map(
            |(id, weight_g, dims_mm, zone, metallic, fragile, address)| ParcelLabel {
                id,
                weight_g,
                dims_mm,
                zone: zone.to_string(),
                nature: if metallic {
                    Nature::Metallic
                } else {
                    Nature::Nonmetallic
                },
                fragility: if fragile {
                    Fragility::Fragile
                } else {
                    Fragility::Regular
                },
                address,
            },
        )
}

pub fn arb_class() -> impl Strategy<Value = ObjectClass> {
    proptest::sample::select(ObjectClass::ALL.to_vec())
}

pub fn arb_thermal_map() -> impl Strategy<Value = ThermalMap> {
    (1usize..=5, 1usize..=5)
        .prop_flat_map(|(r, c)| proptest::collection::vec(proptest::collection::vec(15.0f64..60.0, c), r))
        .prop_map(ThermalMap)
}

/// Physical parcels covering every reject path as well as clean ones.
pub fn arb_instance() -> impl Strategy<Value = ParcelInstance> {
    (
        arb_label(),
        arb_class(),
        prop_oneof![3 => Just(0.0f64), 1 => 0.0f64..20.0],
        0.0f64..=1.0,
        prop_oneof![3 => Just(1.0f64), 1 => 0.8f64..1.2],
        prop_oneof![2 => Just(None), 1 => arb_thermal_map().prop_map(Some)],
    )
        .prop_map(
            |(label, true_class, metal_mass_g, orientation_factor, weight_scale, map)| {
                let mut p = ParcelInstance::clean(label);
                p.true_class = true_class;
                p.metal_mass_g = metal_mass_g;
                p.orientation_factor = orientation_factor;
                p.true_weight_g *= weight_scale;
                if let Some(map) = map {
                    p.thermal_map = map;
                }
                p
            },
        )
}

pub fn arb_basis() -> impl Strategy<Value = SortBasis> {
    prop_oneof![
        Just(SortBasis::Weight),
        Just(SortBasis::Dimensions),
        Just(SortBasis::Zone)
    ]
}

pub fn arb_scenario(max_parcels: usize) -> impl Strategy<Value = Scenario> {
    (
        proptest::collection::vec((0.0f64..30.0, arb_instance()), 0..=max_parcels),
        any::<u64>(),
        arb_basis(),
        any::<bool>(),
    )
        .prop_map(|(parcels, seed, sort_basis, drums)| {
            let mut s = Scenario {
                parcels: parcels
                    .into_iter()
                    .enumerate()
                    .map(|(i, (arrival_s, mut instance))| {
                        // Unique ids keep the scenario valid.
                        instance.label.id = format!("P{i:011}");
                        ScenarioParcel { arrival_s, instance }
                    })
                    .collect(),
                seed,
                sort_basis,
                ..Scenario::default()
            };
            if drums {
                let n = s.bins.bin_ids(sort_basis).len();
                s.bins.belt_positions_m = Some((1..=n).map(|k| k as f64 * 1.5).collect());
            }
            s
        })
}
