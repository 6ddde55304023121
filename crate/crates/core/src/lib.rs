//! Parcel scan-and-sort pipeline.
//!
//! Parcels are registered from a label payload, pass four inspection
//! stations (metal, X-ray, IR thermal, weight), and are either dumped or
//! pushed into a sorting bin. The crate provides the label codec, the
//! station models, confusion-matrix metrics, a deterministic discrete-event
//! simulator and an append-only checkpoint tracking store.

pub mod codec;
pub mod detectors;
pub mod error;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod sim;
pub mod sorter;
pub mod tracking;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Classification report in `f64`, the form that is rendered and served.
pub type Report = metrics::ClassReport<f64>;
/// Classification report in exact rationals.
pub type ExactReport = metrics::ClassReport<num_rational::Ratio<i64>>;
/// X-ray channel over `f64` probabilities.
pub type ChannelModel = detectors::XrayChannelModel<f64>;
