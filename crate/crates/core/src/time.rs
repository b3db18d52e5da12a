//! Integer-picosecond time arithmetic and unit-tagged quantities.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Speed of light in vacuum, m/s (exact by definition of the metre).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// A signed duration or instant in integer picoseconds.
///
/// All timing equalities in the crate are decided on this type so that
/// simultaneity checks are exact and platform independent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Picos(pub i64);

impl Picos {
    pub const ZERO: Picos = Picos(0);
    pub const MAX: Picos = Picos(i64::MAX);

    pub const fn ps(v: i64) -> Picos {
        Picos(v)
    }

    pub const fn ns(v: i64) -> Picos {
        Picos(v * 1_000)
    }

    pub const fn us(v: i64) -> Picos {
        Picos(v * 1_000_000)
    }

    pub const fn ms(v: i64) -> Picos {
        Picos(v * 1_000_000_000)
    }

    /// Rounds a value in seconds to the nearest picosecond.
    pub fn from_seconds(s: f64) -> Picos {
        Picos((s * 1e12).round() as i64)
    }

    pub fn as_seconds(self) -> f64 {
        self.0 as f64 * 1e-12
    }

    pub fn abs(self) -> Picos {
        Picos(self.0.abs())
    }

    pub fn signum(self) -> i64 {
        self.0.signum()
    }

    pub fn clamp(self, lo: Picos, hi: Picos) -> Picos {
        Picos(self.0.clamp(lo.0, hi.0))
    }

    /// Euclidean remainder into `[0, period)`.
    pub fn rem_euclid(self, period: Picos) -> Picos {
        Picos(self.0.rem_euclid(period.0))
    }

    /// Representative of `self` modulo `period` in `(-period/2, period/2]`.
    pub fn centered_mod(self, period: Picos) -> Picos {
        let r = self.0.rem_euclid(period.0);
        if r > period.0 / 2 {
            Picos(r - period.0)
        } else {
            Picos(r)
        }
    }
}

impl fmt::Display for Picos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ps", self.0)
    }
}

impl Add for Picos {
    type Output = Picos;
    fn add(self, rhs: Picos) -> Picos {
        Picos(self.0 + rhs.0)
    }
}

impl AddAssign for Picos {
    fn add_assign(&mut self, rhs: Picos) {
        self.0 += rhs.0;
    }
}

impl Sub for Picos {
    type Output = Picos;
    fn sub(self, rhs: Picos) -> Picos {
        Picos(self.0 - rhs.0)
    }
}

impl SubAssign for Picos {
    fn sub_assign(&mut self, rhs: Picos) {
        self.0 -= rhs.0;
    }
}

impl Neg for Picos {
    type Output = Picos;
    fn neg(self) -> Picos {
        Picos(-self.0)
    }
}

impl Mul<i64> for Picos {
    type Output = Picos;
    fn mul(self, rhs: i64) -> Picos {
        Picos(self.0 * rhs)
    }
}

impl Sum for Picos {
    fn sum<I: Iterator<Item = Picos>>(iter: I) -> Picos {
        Picos(iter.map(|p| p.0).sum())
    }
}

/// Time units accepted in scenario files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeUnit {
    #[serde(rename = "ps")]
    Ps,
    #[serde(rename = "ns")]
    Ns,
    #[serde(rename = "us")]
    Us,
    #[serde(rename = "ms")]
    Ms,
    #[serde(rename = "s")]
    S,
}

impl TimeUnit {
    pub fn picos_per_unit(self) -> f64 {
        match self {
            TimeUnit::Ps => 1.0,
            TimeUnit::Ns => 1e3,
            TimeUnit::Us => 1e6,
            TimeUnit::Ms => 1e9,
            TimeUnit::S => 1e12,
        }
    }
}

impl FromStr for TimeUnit {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ps" => Ok(TimeUnit::Ps),
            "ns" => Ok(TimeUnit::Ns),
            "us" => Ok(TimeUnit::Us),
            "ms" => Ok(TimeUnit::Ms),
            "s" => Ok(TimeUnit::S),
            other => Err(format!("unknown time unit '{other}'")),
        }
    }
}

/// A time value as written in a scenario file: `{"value": 10, "unit": "ns"}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeQuantity {
    pub value: f64,
    pub unit: TimeUnit,
}

impl TimeQuantity {
    pub fn to_picos(self) -> Picos {
        Picos((self.value * self.unit.picos_per_unit()).round() as i64)
    }

    /// Canonical serialized form: integer picoseconds.
    pub fn from_picos(p: Picos) -> TimeQuantity {
        TimeQuantity {
            value: p.0 as f64,
            unit: TimeUnit::Ps,
        }
    }
}

/// Parses compact command-line quantities such as `1ps`, `2.5ns` or `10us`.
pub fn parse_time(text: &str) -> Result<Picos, String> {
    let text = text.trim();
    let split = text
        .find(|c: char| c.is_ascii_alphabetic())
        .ok_or_else(|| format!("missing unit in '{text}'"))?;
    let (num, unit) = text.split_at(split);
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| format!("bad number in '{text}'"))?;
    let unit: TimeUnit = unit.parse()?;
    Ok(TimeQuantity { value, unit }.to_picos())
}
