//! Scalar abstraction for metric arithmetic.
//!
//! Rates are ratios of counts, so the same code runs in floating point or
//! in exact rationals. Exact rationals make two-decimal rounding of values
//! such as 0.875 or 0.285 independent of binary representation.

use std::fmt::Debug;

use num_rational::Ratio;
use num_traits::{Float, Num};

pub trait Scalar: Num + Copy + PartialOrd + Debug {
    fn from_count(n: u64) -> Self;
    fn floor(self) -> Self;
    fn to_f64(self) -> f64;

    fn ratio(num: u64, den: u64) -> Self {
        Self::from_count(num) / Self::from_count(den)
    }

    /// Rounds to two decimals, halves away from zero.
    fn round2(self) -> Self {
        let hundred = Self::from_count(100);
        let half = Self::one() / (Self::one() + Self::one());
        if self < Self::zero() {
            Self::zero() - ((Self::zero() - self) * hundred + half).floor() / hundred
        } else {
            (self * hundred + half).floor() / hundred
        }
    }

    /// Two-decimal rounding expressed as an integer count of hundredths.
    fn hundredths(self) -> i64 {
        let scaled = self.round2() * Self::from_count(100);
        scaled.to_f64().round() as i64
    }
}

impl Scalar for f64 {
    fn from_count(n: u64) -> Self {
        n as f64
    }
    fn floor(self) -> Self {
        Float::floor(self)
    }
    fn to_f64(self) -> f64 {
        self
    }
}

impl Scalar for f32 {
    fn from_count(n: u64) -> Self {
        n as f32
    }
    fn floor(self) -> Self {
        Float::floor(self)
    }
    fn to_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Scalar for Ratio<i64> {
    fn from_count(n: u64) -> Self {
        Ratio::from_integer(n as i64)
    }
    fn floor(self) -> Self {
        Ratio::floor(&self)
    }
    fn to_f64(self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
}

/// Formats a value already rounded to hundredths, e.g. `88` -> `"0.88"`.
pub fn format_hundredths(h: i64) -> String {
    let sign = if h < 0 { "-" } else { "" };
    let h = h.abs();
    format!("{sign}{}.{:02}", h / 100, h % 100)
}
